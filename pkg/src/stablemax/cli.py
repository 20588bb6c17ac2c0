"""Command-line experiment runner.

Subcommands ``bn``, ``maxima``, ``rn``, ``kac``, ``simulate`` read a JSON
config; ``report`` summarizes a run directory; ``check`` runs the
acceptance suite.  Exit codes: 0 success, 2 config or input error,
3 numeric or engine error, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import bn_engine as bne
from . import maxima_lab as ml
from .representations import MixedMovingAverage, ProductShift, RenewalMarkovShift
from .representations import representation_from_dict
from .simulator import TruncationError, TruncationPolicy, paths_to_jsonl, simulate_paths
from .stable_core import RandomStream

EXIT_OK, EXIT_CONFIG, EXIT_ENGINE, EXIT_ACCEPTANCE = 0, 2, 3, 4

REPORT_INPUTS = (
    "bn.csv",
    "bn_fit.json",
    "maxima.csv",
    "verdict.json",
    "rn.csv",
    "kac.csv",
    "kac_check.json",
    "paths.jsonl",
    "acceptance.json",
)


class ConfigError(ValueError):
    pass


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``from_dict(c.to_dict()) == c``."""

    representation: dict
    n_grid: tuple
    seed: int
    replicates: int = 2000
    normalization: object = "n_alpha"
    truncation: dict = field(default_factory=dict)
    output: str = "run"
    sampler: str = "auto"
    one_sided: bool = False
    bn_method: str = "exact"
    mc_samples: int = 100_000
    epsilon: float = 0.5
    rn_samples: int = 10_000
    kac: dict = field(default_factory=dict)
    paths: int = 10

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _require(isinstance(d, dict), "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(d) - known)
        _require(not extra, f"unknown config fields: {', '.join(extra)}")
        for key in ("representation", "n_grid"):
            _require(key in d, f"config is missing {key!r}")
        # never fall back to a time-based seed
        _require(d.get("seed") is not None, "config needs a seed (or pass --seed)")
        try:
            rep = representation_from_dict(d["representation"]).to_dict()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad representation: {exc}") from None
        grid = d["n_grid"]
        _require(isinstance(grid, list) and grid, "n_grid must be a nonempty list")
        _require(all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in grid),
                 "n_grid entries must be positive integers")
        _require(all(a < b for a, b in zip(grid, grid[1:])), "n_grid must be strictly increasing")
        seed = d["seed"]
        _require(isinstance(seed, int) and 0 <= seed < 2**64, "seed must be an unsigned 64-bit integer")
        cfg = cls(rep, tuple(grid), seed, **{k: d[k] for k in known - {"representation", "n_grid", "seed"} if k in d})
        cfg._validate()
        return cfg

    def _validate(self):
        _require(isinstance(self.replicates, int) and self.replicates >= 1, "replicates must be at least 1")
        norm = self.normalization
        _require(norm in ("n_alpha", "bn") or (isinstance(norm, (int, float)) and not isinstance(norm, bool)
                                               and norm > 0),
                 "normalization must be 'n_alpha', 'bn' or a positive number")
        try:
            self.policy()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad truncation policy: {exc}") from None
        _require(self.sampler in ("auto", "direct", "lepage"), "sampler must be auto, direct or lepage")
        _require(self.bn_method in ("exact", "mc", "both"), "bn_method must be exact, mc or both")
        _require(isinstance(self.mc_samples, int) and self.mc_samples >= 2, "mc_samples must be at least 2")
        _require(0.0 < self.epsilon < 1.0, "epsilon must lie in (0, 1)")
        _require(isinstance(self.rn_samples, int) and self.rn_samples >= 1000, "rn_samples must be at least 1000")
        _require(isinstance(self.paths, int) and self.paths >= 1, "paths must be at least 1")
        _require(isinstance(self.kac, dict), "kac must be an object")
        system = self.kac.get("system", "representation")
        _require(system in ("representation", "cycle"), "kac.system must be 'representation' or 'cycle'")
        if system == "cycle":
            K = self.kac.get("K")
            _require(isinstance(K, int) and K >= 1, "kac.K must be a positive integer")
            A = self.kac.get("A", [0])
            _require(isinstance(A, list) and A and all(isinstance(a, int) and 0 <= a < K for a in A),
                     "kac.A must list states of the cycle")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(**self.truncation)

    def rep(self):
        return representation_from_dict(self.representation)


def load_config(path, seed=None, out=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if isinstance(d, dict):
        if seed is not None:
            d["seed"] = seed
        if out is not None:
            d["output"] = str(out)
    return ExperimentConfig.from_dict(d)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(x):
    return f"{x:.17g}"


def _write(outdir: Path, name: str, text: str, written: list):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / name).write_text(text)
    if name not in written:
        written.append(name)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(outdir: Path, command: str, written: list, seconds: float, config=None):
    """Merge this command's files and timing into ``manifest.json``."""
    path = outdir / "manifest.json"
    try:
        man = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        man = {}
    files = man.get("files", {})
    for name in written:
        files[name] = None
    man["artifact_version"] = __version__
    man["files"] = {name: _sha256(outdir / name) for name in sorted(files) if (outdir / name).exists()}
    man.setdefault("timings", {})[command] = round(seconds, 3)
    if config is not None:
        man.setdefault("config_sha256", {})[command] = config.sha256()
    outdir.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump_json(man))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _stream(cfg, *labels):
    return RandomStream(cfg.seed, 0, labels)


def cmd_bn(cfg: ExperimentConfig, outdir: Path, workers: int, written: list):
    rep = cfg.rep()
    tables = []
    if cfg.bn_method in ("exact", "both"):
        tables.append(bne.bn_table(rep, cfg.n_grid))
    if cfg.bn_method in ("mc", "both"):
        tables.append(bne.bn_table(rep, cfg.n_grid, "mc", cfg.mc_samples, _stream(cfg, "bn")))
    rows = [r for t in tables for r in t.rows]
    _write(outdir, "bn.csv", bne.BnTable(rep.alpha, rows).to_csv(), written)
    fit = {"alpha": rep.alpha, "kind": rep.kind, "grid": [cfg.n_grid[0], cfg.n_grid[-1]]}
    for t in tables:
        method = t.rows[0].method
        try:
            fit[f"slope_{method}"] = bne.growth_exponent(t)
        except ValueError as exc:
            fit[f"slope_{method}"] = None
            fit["note"] = str(exc)
    _write(outdir, "bn_fit.json", _dump_json(fit), written)


def _reference(rep, cfg, n):
    """Limit law for the normalized maxima, or ``None`` if none applies."""
    if isinstance(rep, ProductShift):
        if rep.law == "gaussian" and cfg.normalization == "bn":
            return "subgaussian"
        if rep.law == "rademacher":
            return None
    if cfg.normalization == "n_alpha" and isinstance(rep, MixedMovingAverage):
        return ml.frechet_limit_law(rep, "n_alpha", cfg.one_sided)
    if cfg.normalization == "bn" and not cfg.one_sided:
        return ml.frechet_limit_law(rep, "bn")
    return None


def _verdict(rep, cfg, sample, i):
    ref = _reference(rep, cfg, sample.n)
    if ref is None:
        return {"ks": None, "threshold": None, "pass": None, "R": sample.R, "reference": None, "n": sample.n}
    if ref == "subgaussian":
        draws = ml.subgaussian_limit_sample(rep.alpha, 20_000, _stream(cfg, "reference", i))
        v = ml.ks_against_sample(sample, draws, label="d_alpha A^(1/2)")
    else:
        v = ml.ks_against_frechet(sample, ref)
    out = json.loads(v.to_json())
    out["n"] = sample.n
    if sample.normalization == "bn" and not sample.one_sided:
        out["lower_bound_holds"] = ml.tail_lower_bound_check(sample, rep.alpha)["holds"]
    return out


def cmd_maxima(cfg, outdir, workers, written):
    rep = cfg.rep()
    buf = io.StringIO()
    verdicts = []
    for i, n in enumerate(cfg.n_grid):
        try:
            sample = ml.run_maxima_experiment(rep, n, max(cfg.replicates, 2), cfg.normalization,
                                              _stream(cfg, "maxima", i), cfg.sampler, cfg.policy(),
                                              cfg.one_sided, workers)
        except TruncationError as exc:
            # flush what was finished, including the offending sample
            if exc.partial is not None:
                buf.write(exc.partial.to_csv().split("\n", 1)[1])
            _write(outdir, "maxima.csv", "n,replicate,value,normalization\n" + buf.getvalue(), written)
            raise
        buf.write(sample.to_csv().split("\n", 1)[1])
        _write(outdir, "maxima.csv", "n,replicate,value,normalization\n" + buf.getvalue(), written)
        verdicts.append(_verdict(rep, cfg, sample, i))
    last = dict(verdicts[-1])
    last["by_n"] = verdicts
    _write(outdir, "verdict.json", _dump_json(last), written)


def cmd_rn(cfg, outdir, workers, written):
    rep = cfg.rep()
    lines = ["n,estimate,stderr"]
    for i, n in enumerate(cfg.n_grid):
        est, se = ml.estimate_rn(rep, n, cfg.epsilon, cfg.rn_samples, _stream(cfg, "rn", i))
        lines.append(f"{n},{_fmt(est)},{_fmt(se)}")
    _write(outdir, "rn.csv", "\n".join(lines) + "\n", written)


def cmd_kac(cfg, outdir, workers, written):
    n = cfg.n_grid[-1]
    if cfg.kac.get("system", "representation") == "cycle":
        system, A = bne.cycle_system(cfg.kac["K"]), set(cfg.kac.get("A", [0]))
    else:
        system, A = cfg.rep(), None
        if not isinstance(system, RenewalMarkovShift):
            raise ConfigError("kac needs a renewal representation or kac.system = 'cycle'")
    led = bne.kac_decomposition(system, A, n)
    _write(outdir, "kac.csv", led.to_csv(), written)
    check = {
        "n": n,
        "occupation_residual": led.occupation_residual,
        "return_residual": led.return_residual,
        "pass": bool(max(led.occupation_residual, led.return_residual) < 1e-12),
    }
    _write(outdir, "kac_check.json", _dump_json(check), written)


def cmd_simulate(cfg, outdir, workers, written):
    rep = cfg.rep()
    chunks = []
    for i, n in enumerate(cfg.n_grid):
        paths = simulate_paths(rep, n, cfg.paths, _stream(cfg, "paths", i), cfg.sampler, cfg.policy(),
                               workers=workers)
        chunks.append(paths_to_jsonl(paths))
    _write(outdir, "paths.jsonl", "".join(chunks), written)


def cmd_check(outdir, workers, written, only=None, seed=None, echo=print):
    from . import acceptance

    kwargs = {} if seed is None else {"seed": seed}
    rows = acceptance.run_all(only, echo=echo, **kwargs)
    failed = [r for r in rows if not r.passed and not r.supplementary]
    doc = {
        "checks": [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in rows],
        "criteria": {
            str(k): all(r.passed for r in rows if r.criterion == k and not r.supplementary)
            for k in sorted({r.criterion for r in rows})
        },
        "pass": not failed,
    }
    _write(outdir, "acceptance.json", _dump_json(doc), written)
    timings = {}
    for r in rows:
        timings[r.criterion] = timings.get(r.criterion, 0.0) + r.seconds
    return not failed, timings


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _plot_csv(rows):
    lines = ["x,y,series"]
    lines += [f"{_fmt(x)},{_fmt(y)},{s}" for x, y, s in rows]
    return "\n".join(lines) + "\n"


def _ecdf_rows(values, series, points=200):
    v = np.sort(np.asarray(values, dtype=float))
    idx = np.unique(np.linspace(0, len(v) - 1, min(points, len(v))).astype(int))
    return [(float(v[i]), (i + 1) / len(v), series) for i in idx]


def cmd_report(rundir: Path, written: list):
    """Assemble ``report.md``, ``plotdata_*.csv`` and PNG figures."""
    from .plotting import plot_table

    present = [f for f in REPORT_INPUTS if (rundir / f).exists()]
    if not present:
        raise ConfigError(f"no run outputs in {rundir}; expected any of: {', '.join(REPORT_INPUTS)}")
    md = ["# Run report", "", f"Directory: `{rundir.name}`", ""]
    plots = {}

    if "bn.csv" in present:
        rows = _read_csv(rundir / "bn.csv")
        plots["bn"] = [(float(r["n"]), float(r["bn"]), r["method"]) for r in rows]
        md += ["## Growth of b_n", "", "| n | b_n | method | s.e. |", "|---|---|---|---|"]
        md += [f"| {r['n']} | {float(r['bn']):.6g} | {r['method']} | {float(r['stderr']):.3g} |" for r in rows]
        md.append("")
        if "bn_fit.json" in present:
            fit = json.loads((rundir / "bn_fit.json").read_text())
            for key in sorted(k for k in fit if k.startswith("slope_")):
                val = fit[key]
                md.append(f"- fitted log-log slope ({key[6:]}): " + ("n/a" if val is None else f"{val:.4f}"))
            md.append("")

    if "maxima.csv" in present:
        rows = _read_csv(rundir / "maxima.csv")
        by_n = {}
        for r in rows:
            by_n.setdefault(int(r["n"]), []).append(float(r["value"]))
        pts = []
        for n in sorted(by_n):
            pts += _ecdf_rows(by_n[n], f"n={n}")
        plots["maxima"] = pts
        md += ["## Normalized maxima", "", "| n | R | median | 90% quantile |", "|---|---|---|---|"]
        for n in sorted(by_n):
            v = np.asarray(by_n[n])
            md.append(f"| {n} | {v.size} | {np.median(v):.4g} | {np.quantile(v, 0.9):.4g} |")
        md.append("")
        if "verdict.json" in present:
            ver = json.loads((rundir / "verdict.json").read_text())
            md += ["| n | KS | threshold | verdict | lower bound |", "|---|---|---|---|---|"]
            for v in ver.get("by_n", [ver]):
                ks = "n/a" if v["ks"] is None else f"{v['ks']:.4f}"
                verdict = "no reference" if v["pass"] is None else ("PASS" if v["pass"] else "FAIL")
                lb = {True: "holds", False: "violated", None: "n/a"}[v.get("lower_bound_holds")]
                md.append(f"| {v['n']} | {ks} | {v['threshold']} | {verdict} | {lb} |")
            md.append("")

    if "rn.csv" in present:
        rows = _read_csv(rundir / "rn.csv")
        plots["rn"] = [(float(r["n"]), float(r["estimate"]), "estimate") for r in rows]
        md += ["## Collision probability r_n", "", "| n | estimate | s.e. |", "|---|---|---|"]
        md += [f"| {r['n']} | {float(r['estimate']):.5g} | {float(r['stderr']):.2g} |" for r in rows]
        md.append("")

    if "kac.csv" in present:
        rows = _read_csv(rundir / "kac.csv")
        plots["kac"] = [(float(r["k"]), float(r["m_Ak"]), "m(A_k)") for r in rows if float(r["m_Ak"]) > 0]
        plots["kac"] += [(float(r["k"]), float(r["m_Rk"]), "m(R_k)") for r in rows if float(r["m_Rk"]) > 0]
        md += ["## First-entrance ledger", ""]
        if "kac_check.json" in present:
            chk = json.loads((rundir / "kac_check.json").read_text())
            md.append(f"- n = {chk['n']}, occupation residual {chk['occupation_residual']:.3g}, "
                      f"return residual {chk['return_residual']:.3g}: {'PASS' if chk['pass'] else 'FAIL'}")
        md.append("")

    if "paths.jsonl" in present:
        lines = (rundir / "paths.jsonl").read_text().splitlines()
        metas = [json.loads(line)["meta"] for line in lines]
        bad = sum(1 for m in metas if not m.get("certified", True))
        md += ["## Simulated paths", "", f"- {len(metas)} paths, {bad} missed the truncation tolerance", ""]

    if "acceptance.json" in present:
        acc = json.loads((rundir / "acceptance.json").read_text())
        checks = acc["checks"]
        crits = sorted({c["criterion"] for c in checks})
        fams = sorted({c["family"] or "-" for c in checks})
        md += ["## Acceptance matrix", "", "| family | " + " | ".join(str(k) for k in crits) + " |",
               "|---" * (len(crits) + 1) + "|"]
        for fam in fams:
            cells = []
            for k in crits:
                sel = [c for c in checks if c["criterion"] == k and (c["family"] or "-") == fam
                       and not c["supplementary"]]
                cells.append("" if not sel else ("PASS" if all(c["passed"] for c in sel) else "FAIL"))
            md.append(f"| {fam} | " + " | ".join(cells) + " |")
        md += ["", "| criterion | check | value | threshold | result |", "|---|---|---|---|---|"]
        for c in checks:
            res = ("PASS" if c["passed"] else "FAIL") + (" (supplementary)" if c["supplementary"] else "")
            md.append(f"| {c['criterion']} | {c['label']} | {c['value']:.4g} | {c['threshold']} | {res} |")
        md += ["", f"Overall: {'PASS' if acc['pass'] else 'FAIL'}", ""]
        plots["acceptance"] = [
            (float(k), float(np.mean([c["passed"] for c in checks if c["criterion"] == k and not c["supplementary"]])),
             "all checks")
            for k in crits
        ]

    for name in sorted(plots):
        if not plots[name]:
            continue
        _write(rundir, f"plotdata_{name}.csv", _plot_csv(plots[name]), written)
        plot_table(plots[name], name, rundir / f"plot_{name}.png")
        written.append(f"plot_{name}.png")
    _write(rundir, "report.md", "\n".join(md).rstrip() + "\n", written)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablemax", description="Maxima of stationary stable processes.")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, default=1, help="worker processes; never changes results")
    p.add_argument("--out", help="output directory (overrides the config)")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [
        ("bn", "tabulate b_n and its growth exponent"),
        ("maxima", "sample normalized maxima and test the limit law"),
        ("rn", "estimate the collision probability r_n"),
        ("kac", "first-entrance ledger and its identities"),
        ("simulate", "dump sample paths as JSON lines"),
    ]:
        sub.add_parser(name, help=text)
    rp = sub.add_parser("report", help="summarize a run directory")
    rp.add_argument("rundir", nargs="?", help="run directory (default: --out)")
    cp = sub.add_parser("check", help="run the acceptance suite")
    cp.add_argument("--only", help="comma-separated criterion numbers")
    return p


COMMANDS = {"bn": cmd_bn, "maxima": cmd_maxima, "rn": cmd_rn, "kac": cmd_kac, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    written: list = []
    t0 = time.perf_counter()
    try:
        if args.command == "report":
            target = args.rundir or args.out
            if target is None:
                raise ConfigError("report needs a run directory")
            rundir = Path(target)
            cmd_report(rundir, written)
            write_manifest(rundir, "report", written, time.perf_counter() - t0)
            return EXIT_OK
        if args.command == "check":
            outdir = Path(args.out or "acceptance_run")
            try:
                only = [int(k) for k in args.only.split(",")] if args.only else None
            except ValueError:
                raise ConfigError("--only takes comma-separated integers") from None
            if only and any(k not in range(1, 15) for k in only):
                raise ConfigError("criteria are numbered 1 to 14")
            ok, timings = cmd_check(outdir, args.workers, written, only, args.seed)
            write_manifest(outdir, "check", written, time.perf_counter() - t0)
            print("acceptance: " + ("PASS" if ok else "FAIL"))
            return EXIT_OK if ok else EXIT_ACCEPTANCE
        if args.config is None:
            raise ConfigError(f"{args.command} needs --config")
        cfg = load_config(args.config, args.seed, args.out)
        outdir = Path(cfg.output)
        _write(outdir, "config.json", cfg.to_json(), written)
        try:
            COMMANDS[args.command](cfg, outdir, args.workers, written)
        finally:
            write_manifest(outdir, args.command, written, time.perf_counter() - t0, cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, ValueError, ArithmeticError, RuntimeError, MemoryError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
