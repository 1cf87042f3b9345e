"""Experiment runner: ``ptplaq <command> --config <file.json> [--out DIR]``.

Commands
--------
spectrum          numeric vs closed-form eigenvalues of H_L over a gamma sweep
symmetry-report   parity operators, pseudo-Hermiticity, PT phase (JSON)
branches          closed-form stationary states at one (gamma, E)
continue          one branch continued in gamma: curve CSV + events JSON
stability         spectral plane of one branch state (CSV)
evolve            perturbed time evolution of one branch state (CSV)
reproduce-figure  canned parameter sets fig2..fig10 with plot scripts

Every run writes a ``run_manifest.json`` (inputs echoed, package version,
backend, wall time) next to its data files; data files are written
atomically and are byte-reproducible for a fixed seed. Exit codes: 0 on
success, 2 on a config/usage violation, 3 on a numerical failure.
``PTPLAQ_THREADS`` caps the worker threads used for independent branches.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

import ptplaq
from ptplaq import dynamics, numerics, stability, stationary, symmetry
from ptplaq.model import PlaquetteConfig, PlaquetteKind, build_linear_hamiltonian

COMMANDS = ("spectrum", "symmetry-report", "branches", "continue",
            "stability", "evolve", "reproduce-figure")

FIGURE_IDS = tuple(f"fig{n}" for n in range(2, 11))


class ConfigError(Exception):
    """Invalid experiment configuration; carries (path, line, message) triples."""

    def __init__(self, issues):
        self.issues = issues
        super().__init__("; ".join(m for _, _, m in issues))


def _find_line(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return 1


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _check(obj, text, issues, key, types, required, path="config"):
    if key not in obj:
        if required:
            issues.append((path, _find_line(text, key), f"missing required field '{key}'"))
        return None
    val = obj[key]
    if not isinstance(val, types):
        tn = "/".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        issues.append((path, _find_line(text, key), f"field '{key}' must be {tn}"))
        return None
    return val


def _parse_plaquette(obj, text, issues) -> PlaquetteConfig | None:
    plq = _check(obj, text, issues, "plaquette", dict, required=True)
    if plq is None:
        return None
    kind = _check(plq, text, issues, "kind", str, required=True)
    k = _check(plq, text, issues, "k", (int, float), required=True)
    gamma = _check(plq, text, issues, "gamma", (int, float), required=False)
    if kind is not None and kind not in ("A", "B", "C", "D"):
        issues.append(("plaquette.kind", _find_line(text, "kind"),
                       f"kind must be one of A, B, C, D (got {kind!r})"))
        return None
    if issues or kind is None or k is None:
        return None
    return PlaquetteConfig(PlaquetteKind(kind), float(k), float(gamma or 0.0))


def _parse_gamma_range(obj, text, issues, required):
    rng = _check(obj, text, issues, "gamma_range", list, required=required)
    if rng is None:
        return None
    if len(rng) != 3 or not all(isinstance(x, (int, float)) for x in rng):
        issues.append(("gamma_range", _find_line(text, "gamma_range"),
                       "gamma_range must be [lo, hi, step]"))
        return None
    lo, hi, step = map(float, rng)
    if hi < lo or step <= 0.0:
        issues.append(("gamma_range", _find_line(text, "gamma_range"),
                       "need lo <= hi and step > 0"))
        return None
    return lo, hi, step


def load_config(path: str, command: str) -> dict:
    """Parse and validate the experiment config for ``command``."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(path, exc.lineno, f"invalid JSON: {exc.msg}")]) from exc
    if not isinstance(obj, dict):
        raise ConfigError([(path, 1, "config must be a JSON object")])
    issues: list = []
    cfg_cmd = obj.get("command")
    if cfg_cmd is not None and cfg_cmd != command:
        issues.append(("command", _find_line(text, "command"),
                       f"config command {cfg_cmd!r} does not match CLI command {command!r}"))

    parsed: dict = {"raw": obj}
    if command != "reproduce-figure":
        parsed["plaquette"] = _parse_plaquette(obj, text, issues)
    if command in ("branches", "continue", "stability", "evolve"):
        parsed["e_or_g"] = _check(obj, text, issues, "E_or_G", (int, float), required=True)
    if command in ("spectrum", "continue"):
        parsed["gamma_range"] = _parse_gamma_range(obj, text, issues, required=True)
    if command in ("continue", "stability", "evolve"):
        branch = _check(obj, text, issues, "branch", str, required=True)
        parsed["branch"] = branch
    if command == "evolve":
        pert = _check(obj, text, issues, "perturbation", dict, required=False) or {}
        integ = _check(obj, text, issues, "integration", dict, required=False) or {}
        parsed["perturbation"] = pert
        parsed["integration"] = integ
    parsed["seed"] = obj.get("seed")
    parsed["output_dir"] = _check(obj, text, issues, "output_dir", str, required=False)
    if issues:
        raise ConfigError(issues)
    return parsed


def _write_manifest(outdir: Path, command: str, config_echo, seed, outputs, t0):
    manifest = {
        "command": command,
        "config": config_echo,
        "seed": seed,
        "package_version": ptplaq.__version__,
        "backend": ptplaq.backend_name(),
        "wall_time_s": round(time.perf_counter() - t0, 6),
        "outputs": sorted(str(p.name) for p in outputs),
    }
    if any(p.name.split("_")[1:2] == ["evolve"] or p.name.startswith("evolve_")
           for p in outputs):
        manifest["plot_hint"] = "site powers in trajectory CSVs are meant for log-scale axes"
    _atomic_write(outdir / "run_manifest.json",
                  lambda p: p.write_text(json.dumps(manifest, indent=2) + "\n"))


def _branch_state(cfg: PlaquetteConfig, e: float, branch: str):
    states = [s for s in stationary.analytic_branches(cfg, e) if s.label == branch]
    if not states:
        raise ValueError(f"branch {branch!r} does not exist at gamma={cfg.gamma}")
    return states[0]


def _cmd_spectrum(parsed, outdir: Path) -> list[Path]:
    cfg0 = parsed["plaquette"]
    lo, hi, step = parsed["gamma_range"]
    n = cfg0.n_sites
    path = outdir / f"spectrum_{cfg0.kind.value}.csv"
    rows = []
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    for i in range(count):
        g = lo + i * step
        cfg = cfg0.with_gamma(g)
        w_num = numerics.eig_complex(build_linear_hamiltonian(cfg))
        w_ana = symmetry.linear_spectrum_analytic(cfg)
        rows.append((g, w_num, w_ana, numerics.match_spectra(w_num, w_ana)))

    def _write(p):
        with open(p, "w", newline="") as fh:
            import csv
            w = csv.writer(fh)
            hdr = ["gamma"]
            hdr += [f"re_numeric_{j}" for j in range(n)] + [f"im_numeric_{j}" for j in range(n)]
            hdr += [f"re_analytic_{j}" for j in range(n)] + [f"im_analytic_{j}" for j in range(n)]
            hdr += ["max_mismatch"]
            w.writerow(hdr)
            for g, wn, wa, mm in rows:
                w.writerow([f"{g:.17g}"]
                           + [f"{x.real:.17g}" for x in wn] + [f"{x.imag:.17g}" for x in wn]
                           + [f"{x.real:.17g}" for x in wa] + [f"{x.imag:.17g}" for x in wa]
                           + [f"{mm:.6e}"])
    _atomic_write(path, _write)
    return [path]


def _cmd_symmetry_report(parsed, outdir: Path) -> list[Path]:
    cfg = parsed["plaquette"]
    h = build_linear_hamiltonian(cfg)
    cands = symmetry.parity_candidates(cfg)
    report = symmetry.classify_pt_phase(cfg)
    obj = {
        "kind": cfg.kind.value,
        "k": cfg.k,
        "gamma": cfg.gamma,
        "parity_operators": [
            {"label": c.label, "permutation": list(c.permutation),
             "pseudo_hermitian": symmetry.check_pseudo_hermiticity(h, c)}
            for c in cands
        ],
        "regime": report.regime.value,
        "ep_order": report.ep_order,
        "real_eigenvalue_count": report.real_eigenvalue_count,
    }
    path = outdir / f"symmetry_{cfg.kind.value}.json"
    _atomic_write(path, lambda p: p.write_text(json.dumps(obj, indent=2) + "\n"))
    return [path]


def _cmd_branches(parsed, outdir: Path) -> list[Path]:
    cfg = parsed["plaquette"]
    e = float(parsed["e_or_g"])
    states = stationary.analytic_branches(cfg, e)
    path = outdir / f"branches_{cfg.kind.value}.csv"

    def _write(p):
        import csv
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            labels = cfg.site_labels
            w.writerow(["label"] + [f"amp_{s}" for s in labels]
                       + [f"phase_{s}" for s in labels] + ["E", "residual_norm"])
            for s in states:
                m = s.madelung
                w.writerow([s.label] + [f"{a:.17g}" for a in m.amplitudes]
                           + [f"{ph:.17g}" for ph in m.phases]
                           + [f"{s.e:.17g}", f"{s.residual_norm:.3e}"])
    _atomic_write(path, _write)
    return [path]


def _cmd_continue(parsed, outdir: Path) -> list[Path]:
    cfg = parsed["plaquette"]
    e = float(parsed["e_or_g"])
    lo, hi, step = parsed["gamma_range"]
    curve = stationary.continue_branch(cfg, parsed["branch"], e, (lo, hi), step,
                                       detect_events=True)
    return _write_curve(curve, outdir, f"branch_{cfg.kind.value}_{parsed['branch']}")


def _write_curve(curve, outdir: Path, stem: str) -> list[Path]:
    csv_path = outdir / f"{stem}.csv"
    _atomic_write(csv_path, lambda p: stationary.write_branch_csv(p, curve))
    meta = {
        "label": curve.label,
        "figure_symbol": stationary.FIGURE_SYMBOLS.get(curve.label),
        "events": [{"gamma": ev.gamma, "kind": ev.kind.value, "description": ev.description}
                   for ev in curve.events],
        "termination": None if curve.termination is None else {
            "gamma": curve.termination.gamma,
            "bracket": list(curve.termination.bracket),
            "reason": curve.termination.reason,
        },
    }
    meta_path = outdir / f"{stem}_events.json"
    _atomic_write(meta_path, lambda p: p.write_text(json.dumps(meta, indent=2) + "\n"))
    return [csv_path, meta_path]


def _cmd_stability(parsed, outdir: Path) -> list[Path]:
    cfg = parsed["plaquette"]
    e = float(parsed["e_or_g"])
    state = _branch_state(cfg, e, parsed["branch"])
    spec = stability.stability_spectrum(stability.linearization_matrix(cfg, e, state.u))
    path = outdir / f"lambda_{cfg.kind.value}_{parsed['branch']}_gamma{cfg.gamma:g}.csv"
    _atomic_write(path, lambda p: stability.write_spectrum_csv(p, spec))
    return [path]


def _cmd_evolve(parsed, outdir: Path, seed) -> list[Path]:
    cfg = parsed["plaquette"]
    e = float(parsed["e_or_g"])
    state = _branch_state(cfg, e, parsed["branch"])
    pert = parsed["perturbation"]
    integ = parsed["integration"]
    spec = dynamics.PerturbationSpec(
        delta=float(pert.get("delta", 0.0)),
        mode=pert.get("mode", "uniform"),
        seed=int(pert.get("seed", seed or 0)),
        index=int(pert.get("index", 0)))
    u0 = dynamics.perturb(state.u, spec, cfg=cfg, e=e)
    traj = dynamics.integrate(cfg, u0,
                              t_end=float(integ.get("t_end", 50.0)),
                              dt=float(integ.get("dt", dynamics.DEFAULT_DT)))
    parity = symmetry.parity_candidates(cfg)[0]
    traj = dynamics.diagnostics(traj, cfg, parity)
    path = outdir / f"evolve_{cfg.kind.value}_{parsed['branch']}_gamma{cfg.gamma:g}.csv"
    _atomic_write(path, lambda p: dynamics.write_trajectory_csv(p, traj))
    return [path]


# -- canned figure reproductions ---------------------------------------------

_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot {fig} from the CSV files written next to this script.\"\"\"
import csv
import glob
import os
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return rows


def columns(rows, *names):
    return [[float(r[n]) for r in rows] for n in names]


def main():
    branch_files = sorted(glob.glob(os.path.join(HERE, "{fig}_branch_*.csv")))
    lam_files = sorted(glob.glob(os.path.join(HERE, "{fig}_lambda_*.csv")))
    evo_files = sorted(glob.glob(os.path.join(HERE, "{fig}_evolve_*.csv")))
    n = sum(bool(v) for v in (branch_files, lam_files, evo_files))
    fig, axes = plt.subplots(1, max(n, 1), figsize=(5 * max(n, 1), 4))
    axes = [axes] if n <= 1 else list(axes)
    i = 0
    if branch_files:
        ax = axes[i]; i += 1
        for f in branch_files:
            rows = read(f)
            g, amp = columns(rows, "gamma", "amp_A")
            ax.plot(g, [a * a for a in amp], label=os.path.basename(f)[:-4])
        ax.set_xlabel("gamma"); ax.set_ylabel("|u_A|^2"); ax.legend(fontsize=6)
    if lam_files:
        ax = axes[i]; i += 1
        for f in lam_files:
            rows = read(f)
            re, im = columns(rows, "re_lambda", "im_lambda")
            ax.plot(re, im, "o", ms=3, label=os.path.basename(f)[:-4])
        ax.set_xlabel("Re lambda"); ax.set_ylabel("Im lambda"); ax.legend(fontsize=5)
    if evo_files:
        ax = axes[i]; i += 1
        for f in evo_files:
            rows = read(f)
            cols = [c for c in rows[0] if c.startswith("power_")]
            t = [float(r["t"]) for r in rows]
            for c in cols:
                ax.semilogy(t, [max(float(r[c]), 1e-30) for r in rows], lw=0.8)
        ax.set_xlabel("t"); ax.set_ylabel("site power (log)")
    fig.suptitle("{fig}")
    fig.tight_layout()
    out = os.path.join(HERE, "{fig}.png")
    fig.savefig(out, dpi=150)
    print("wrote", out)


if __name__ == "__main__":
    main()
"""


def _thread_count() -> int:
    raw = os.environ.get("PTPLAQ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _continue_many(cfg, labels, e, rng, step, outdir, stem) -> list[Path]:
    def _one(label):
        return stationary.continue_branch(cfg, label, e, rng, step, detect_events=True)

    threads = _thread_count()
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            curves = list(ex.map(_one, labels))
    else:
        curves = [_one(lb) for lb in labels]
    out = []
    for curve in curves:
        out += _write_curve(curve, outdir, f"{stem}_branch_{curve.label}")
    return out


def _figure_outputs(fig_id: str, outdir: Path) -> list[Path]:
    out: list[Path] = []

    def _spectra_at(cfg0, e, gammas, labels, stem):
        for g in gammas:
            cfg = cfg0.with_gamma(g)
            for label in labels:
                try:
                    state = _branch_state(cfg, e, label)
                except ValueError:
                    continue
                spec = stability.stability_spectrum(
                    stability.linearization_matrix(cfg, e, state.u))
                p = outdir / f"{stem}_lambda_{label}_gamma{g:g}.csv"
                _atomic_write(p, lambda q, s=spec: stability.write_spectrum_csv(q, s))
                out.append(p)

    def _evolve_at(cfg0, e, g, labels, stem, t_end=50.0):
        cfg = cfg0.with_gamma(g)
        parity = symmetry.parity_candidates(cfg)[0]
        for label in labels:
            try:
                state = _branch_state(cfg, e, label)
            except ValueError:
                continue
            u0 = dynamics.perturb(state.u, dynamics.PerturbationSpec(1e-3, "uniform"))
            traj = dynamics.integrate(cfg, u0, t_end=t_end)
            traj = dynamics.diagnostics(traj, cfg, parity)
            p = outdir / f"{stem}_evolve_{label}_gamma{g:g}.csv"
            _atomic_write(p, lambda q, t=traj: dynamics.write_trajectory_csv(q, t))
            out.append(p)

    a_cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0)
    b_cfg = PlaquetteConfig(PlaquetteKind.B, 1.0, 0.0)
    c_cfg = PlaquetteConfig(PlaquetteKind.C, 1.0, 0.0)
    d_cfg = PlaquetteConfig(PlaquetteKind.D, 1.0, 0.0)
    a_labels = ("case1aa_plus", "case1aa_minus", "case1ab", "case2")
    c_labels = ("c_inphase_plus", "c_inphase_minus", "c_antiphase_plus", "c_antiphase_minus")
    d_labels = tuple(f"d_branch_{i}" for i in range(5))

    if fig_id == "fig2":
        out += _continue_many(a_cfg, a_labels, 2.0, (0.05, 2.2), 0.01, outdir, "fig2")
    elif fig_id == "fig3":
        _spectra_at(a_cfg, 2.0, (0.5, 1.2, 1.6, 1.9), a_labels, "fig3")
    elif fig_id == "fig4":
        _evolve_at(a_cfg, 2.0, 1.9, a_labels, "fig4")
    elif fig_id == "fig5":
        out += _continue_many(b_cfg, ("b_plus", "b_minus"), 2.0, (0.05, 1.99), 0.01,
                              outdir, "fig5")
    elif fig_id == "fig6":
        _spectra_at(b_cfg, 2.0, (1.0, 1.8), ("b_plus", "b_minus"), "fig6")
    elif fig_id == "fig7":
        _evolve_at(b_cfg, 2.0, 1.0, ("b_plus", "b_minus"), "fig7")
    elif fig_id == "fig8":
        out += _continue_many(c_cfg, c_labels, 2.0, (0.05, 1.2), 0.01, outdir, "fig8")
        _spectra_at(c_cfg, 2.0, (0.5,), c_labels, "fig8")
    elif fig_id == "fig9":
        _evolve_at(c_cfg, 2.0, 0.5, c_labels, "fig9")
    elif fig_id == "fig10":
        out += _continue_many(d_cfg, d_labels, 15.0, (0.1, 1.1), 0.01, outdir, "fig10")
        _spectra_at(d_cfg, 15.0, (0.1, 0.95), d_labels, "fig10")
        _evolve_at(d_cfg, 15.0, 0.1, d_labels, "fig10", t_end=30.0)
    script = outdir / f"{fig_id}_plot.py"
    _atomic_write(script, lambda p: p.write_text(_PLOT_SCRIPT.format(fig=fig_id)))
    out.append(script)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ptplaq",
        description="PT-symmetric nonlinear plaquette laboratory")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("figure", nargs="?", default=None,
                        help="figure identifier for reproduce-figure (fig2..fig10)")
    parser.add_argument("--config", help="experiment config JSON")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    t0 = time.perf_counter()
    outdir = Path(args.out)

    try:
        if args.command == "reproduce-figure":
            if args.figure not in FIGURE_IDS:
                print(f"error: reproduce-figure needs an identifier among "
                      f"{', '.join(FIGURE_IDS)} (got {args.figure!r})", file=sys.stderr)
                return 2
            parsed = {"raw": {"figure": args.figure}}
            if args.config:
                load_config(args.config, args.command)  # validated, settings canned
        else:
            if not args.config:
                print(f"error: command {args.command!r} requires --config", file=sys.stderr)
                return 2
            parsed = load_config(args.config, args.command)
    except ConfigError as exc:
        where = args.config or "<config>"
        for _, line, msg in exc.issues:
            print(f"error: {where}:{line}: {msg}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else parsed.get("seed")
    if args.out == "." and parsed.get("output_dir"):
        outdir = Path(parsed["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        if args.command == "spectrum":
            outputs = _cmd_spectrum(parsed, outdir)
        elif args.command == "symmetry-report":
            outputs = _cmd_symmetry_report(parsed, outdir)
        elif args.command == "branches":
            outputs = _cmd_branches(parsed, outdir)
        elif args.command == "continue":
            outputs = _cmd_continue(parsed, outdir)
        elif args.command == "stability":
            outputs = _cmd_stability(parsed, outdir)
        elif args.command == "evolve":
            outputs = _cmd_evolve(parsed, outdir, seed)
        else:
            outputs = _figure_outputs(args.figure, outdir)
    except (numerics.ConvergenceError, numerics.SingularMatrixError,
            numerics.ToleranceError, numerics.DimensionError,
            symmetry.ConsistencyError, dynamics.NumericalError, ValueError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3

    _write_manifest(outdir, args.command, parsed.get("raw"), seed, outputs, t0)
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
