"""Command-line driver: ``replidyn simulate|verify-folk|verify-historic|catalog``.

Exit codes: 0 pass, 1 config error, 2 numeric invariant violation,
3 certificate failure, 4 insufficient data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .equilibrium import MAX_CANDIDATE_M, MAX_FOLK_M, certify_folk_theorem
from .errors import InsufficientDataError, InvariantViolation, PreconditionError, ReplidynError
from .fitness.catalog import catalog_listing, closure_suite, gradient_suite
from .fitness.maps import from_dict, normalize
from .historic import (
    RegionPartition,
    divergence_report,
    gap_certificate,
    itinerary_certificate,
    repeated_averages,
    trapping_runs,
    write_trapping_csvs,
    xi_descent_check,
)
from .io import atomic_write_json, atomic_write_text
from .replicator import KINDS, ReplicatorSystem, iterate
from .simplex import Face, SimplexPoint, face_center, sample_simplex

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_CERTIFICATE = 3
EXIT_INSUFFICIENT = 4

AVERAGES_ROWS = 10_000
ANALYSES = ("folk", "historic", "itinerary", "averages", "trapping")

log = logging.getLogger("replidyn")


class ConfigError(ReplidynError):
    """An experiment config is malformed; the message names the field."""


@dataclass
class ExperimentConfig:
    fitness: dict
    kind: str = "stable"
    epsilon: float | None = None
    initial: dict = field(default_factory=lambda: {"random": True})
    steps: int = 1000
    precision_bits: int | None = None
    thinning: int = 1
    analyses: list = field(default_factory=list)
    output_dir: str = "out"
    seed: int = 0
    folk: dict = field(default_factory=dict)
    historic: dict = field(default_factory=dict)
    catalog: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        system = doc.get("system")
        if not isinstance(system, dict) or "fitness" not in system:
            raise ConfigError("system.fitness: missing fitness map document")
        cfg = cls(
            fitness=system["fitness"],
            kind=system.get("kind", "stable"),
            epsilon=system.get("epsilon"),
            initial=doc.get("initial", {"random": True}),
            steps=doc.get("steps", 1000),
            precision_bits=doc.get("precision_bits"),
            thinning=doc.get("thinning", 1),
            analyses=list(doc.get("analyses", [])),
            output_dir=doc.get("output_dir", "out"),
            seed=doc.get("seed", 0),
            folk=doc.get("folk", {}),
            historic=doc.get("historic", {}),
            catalog=doc.get("catalog", {}),
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"system.kind: must be one of {KINDS}, got {self.kind!r}")
        if self.epsilon is not None and not (isinstance(self.epsilon, (int, float)) and self.epsilon > 0):
            raise ConfigError(f"system.epsilon: must be a positive number, got {self.epsilon!r}")
        for name in ("steps", "thinning", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or (name != "seed" and v < 1):
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if self.precision_bits is not None:
            b = self.precision_bits
            if not isinstance(b, int) or not (b == 53 or 64 <= b <= 4096):
                raise ConfigError(f"precision_bits: must be 53 or in [64, 4096], got {b!r}")
        for a in self.analyses:
            name = a if isinstance(a, str) else (next(iter(a)) if isinstance(a, dict) and a else None)
            if name not in ANALYSES:
                raise ConfigError(f"analyses: unknown analysis {a!r}")
        if not isinstance(self.initial, dict):
            raise ConfigError("initial: must be an object with 'point', 'face_center' or 'random'")

    def analysis_options(self, name: str) -> dict | None:
        for a in self.analyses:
            if a == name:
                return {}
            if isinstance(a, dict) and name in a:
                return dict(a[name] or {})
        return None

    def resolved(self) -> dict:
        return asdict(self)

    def build_system(self) -> ReplicatorSystem:
        try:
            F = from_dict(self.fitness)
        except ReplidynError as exc:
            raise ConfigError(f"system.fitness: {exc}") from None
        if self.epsilon is not None:
            F = normalize(F, self.epsilon)
        try:
            return ReplicatorSystem(F, self.kind)
        except ReplidynError as exc:
            raise ConfigError(f"system: {exc}") from None

    def initial_point(self, m: int, bits: int) -> SimplexPoint:
        init = self.initial
        try:
            if "point" in init:
                return SimplexPoint.from_coords(init["point"], bits)
            if "face_center" in init:
                return face_center(Face(init["face_center"], m), bits)
            if init.get("random"):
                row = sample_simplex(np.random.default_rng(self.seed), m, 1)[0]
                return SimplexPoint.from_coords(row, bits)
        except ReplidynError as exc:
            raise ConfigError(f"initial: {exc}") from None
        raise ConfigError("initial: must contain 'point', 'face_center' or 'random': true")

    def bits(self, system: ReplicatorSystem) -> int:
        return self.precision_bits or system.default_precision()


def load_config(path, seed=None, out=None) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    cfg = ExperimentConfig.from_dict(doc)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.output_dir = out
    return cfg


def _sidecar(cfg, extra):
    return {"replidyn_version": __version__, "config": cfg.resolved(), "created_unix": time.time(), **extra}


def _digest(paths):
    return {Path(p).name: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths}


def cmd_simulate(cfg: ExperimentConfig) -> int:
    system = cfg.build_system()
    bits = cfg.bits(system)
    x0 = cfg.initial_point(system.m, bits)
    try:
        orbit = iterate(system, x0, cfg.steps, bits, cfg.thinning)
    except InvariantViolation as exc:
        log.error("invariant violation at step %s: %s", exc.step, exc)
        atomic_write_json(Path(cfg.output_dir) / "orbit.json", _sidecar(cfg, {"error": str(exc), "step": exc.step}))
        return EXIT_NUMERIC
    orbit.seed = cfg.seed
    csv_path, json_path = orbit.write(cfg.output_dir, extra={"config": cfg.resolved(), "created_unix": time.time()})
    log.info("wrote %s (%d rows)", csv_path, len(orbit.stored_steps) - 1)
    if orbit.flagged:
        log.error("pre-renormalization drift above 2^(-bits/2) at steps %s", orbit.drift_flags[:10])
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_verify_folk(cfg: ExperimentConfig) -> int:
    system = cfg.build_system()
    if system.kind != "stable":
        raise ConfigError(f"system.kind: verify-folk needs a stable system, got {system.kind}")
    if system.m > MAX_FOLK_M:
        raise ConfigError(f"system.fitness: verify-folk supports m <= {MAX_FOLK_M} (enumeration guard {MAX_CANDIDATE_M})")
    opts = cfg.folk
    cert = certify_folk_theorem(
        system,
        trials=int(opts.get("trials", 100)),
        seed=cfg.seed,
        horizon=int(opts.get("horizon", 100_000)),
        tol=float(opts.get("tol", 1e-8)),
        probe_radius=float(opts.get("probe_radius", 1e-3)),
        probes=int(opts.get("probes", 64)),
    )
    out = Path(cfg.output_dir)
    doc = cert.to_dict()
    atomic_write_json(out / "folk_certificate.json", doc)
    rows = ["trial,converged_step,final_distance,lyapunov_max_drop"]
    rows += [
        f"{i},{t['converged_step']},{t['final_distance']!r},{t['lyapunov_max_drop']!r}"
        for i, t in enumerate(doc["trial_results"])
    ]
    atomic_write_text(out / "folk_trials.csv", "\n".join(rows) + "\n")
    for name, clause in doc["clauses"].items():
        log.info("clause (%s) %s: %s", name, clause["statement"], "pass" if clause["passed"] else "FAIL")
    return EXIT_OK if cert.passed else EXIT_CERTIFICATE


def run_historic(cfg: ExperimentConfig, system: ReplicatorSystem) -> tuple:
    """Run the full historic pipeline; returns (exit code, report dict, written paths)."""
    opts = cfg.historic
    partition = RegionPartition(float(opts.get("delta0", 0.05)))
    trap_opts = cfg.analysis_options("trapping")
    if trap_opts and "delta0" in trap_opts:
        partition = RegionPartition(float(trap_opts["delta0"]))
    avg_opts = cfg.analysis_options("averages") or {}
    s_max = int(avg_opts.get("s_max", opts.get("s_max", 3)))
    window = float(opts.get("window_fraction", 0.5))
    bits = cfg.bits(system)
    out = Path(cfg.output_dir)
    x0 = cfg.initial_point(system.m, bits)

    report = {"u0_radius": partition.u0_radius, "precision_bits": bits, "steps": cfg.steps}
    orbit = iterate(system, x0, cfg.steps, bits, cfg.thinning)
    orbit.seed = cfg.seed
    paths = list(orbit.write(out, extra={"config": cfg.resolved()}))

    descent = xi_descent_check(system, int(opts.get("descent_samples", 10_000)), cfg.seed, 53, partition)
    report["xi_descent"] = descent.to_dict()
    report["orbit_xi_increases"] = len(orbit.xi_increases)
    report["orbit_drift_flags"] = len(orbit.drift_flags)
    report["min_log10_coordinate"] = float(orbit.log10_min.min())

    code = EXIT_OK
    try:
        itin = itinerary_certificate(orbit, partition)
        report["itinerary"] = itin.to_dict()
    except PreconditionError as exc:
        itin = None
        report["itinerary"] = {"passed": False, "reason": str(exc)}
        code = EXIT_INSUFFICIENT

    try:
        records = trapping_runs(orbit, partition)
        paths += write_trapping_csvs(records, out)
        gap = gap_certificate(records)
        report["trapping"] = {str(i): r.to_dict() for i, r in records.items()}
        report["gap"] = gap.to_dict()
    except InsufficientDataError as exc:
        report["trapping"] = {"error": str(exc)}
        report["gap"] = {"passed": False, "reason": str(exc)}
        gap = None
        code = EXIT_INSUFFICIENT

    stack = repeated_averages(orbit, s_max)
    # keep averages.csv near AVERAGES_ROWS rows per level regardless of orbit length
    avg_thin = int(avg_opts.get("thinning", max(cfg.thinning, -(-cfg.steps // AVERAGES_ROWS))))
    paths.append(atomic_write_text(out / "averages.csv", stack.csv(avg_thin)))
    div = divergence_report(stack, window)
    report["divergence"] = div.to_dict()

    passed = (
        descent.passed
        and not orbit.xi_increases
        and itin is not None
        and itin.passed
        and gap is not None
        and gap.passed
        and div.verdict == "historic"
    )
    report["passed"] = bool(passed and code == EXIT_OK)
    if code == EXIT_OK and not passed:
        code = EXIT_CERTIFICATE
    if orbit.flagged and code == EXIT_OK:
        code = EXIT_NUMERIC
    report["exit_code"] = code
    return code, report, paths


def cmd_verify_historic(cfg: ExperimentConfig) -> int:
    system = cfg.build_system()
    if not system.zero_sum:
        raise ConfigError(f"system.kind: verify-historic needs a zero-sum system, got {system.kind}")
    try:
        code, report, paths = run_historic(cfg, system)
    except InvariantViolation as exc:
        log.error("invariant violation at step %s: %s", exc.step, exc)
        return EXIT_NUMERIC
    report["data_sha256"] = _digest(paths)
    atomic_write_json(Path(cfg.output_dir) / "historic_report.json", _sidecar(cfg, {"report": report}))
    if code == EXIT_INSUFFICIENT:
        reason = report["gap"].get("reason") or report["itinerary"].get("reason")
        log.error("insufficient data: %s (raise steps or precision_bits to observe more epochs)", reason)
    log.info("verdict %s, exit %d", report["divergence"]["verdict"], code)
    return code


def cmd_catalog(action: str, cfg: ExperimentConfig | None, seed: int | None, out: str | None) -> int:
    if action == "list":
        listing = catalog_listing()
        for f in listing["primitives"]:
            params = ", ".join(f"{k}: {v}" for k, v in f["params"].items())
            print(f"primitive  {f['kind']:<26} {f['family']:<20} ({params})")
        for c in listing["combinators"]:
            params = ", ".join(f"{k}: {v}" for k, v in c["params"].items())
            print(f"combinator {c['kind']:<26} ({params})")
        print("wrapper    normalize                  (map: FitnessMap, epsilon: real > 0)")
        return EXIT_OK
    seed = seed if seed is not None else (cfg.seed if cfg else 1)
    opts = cfg.catalog if cfg else {}
    extra = []
    for i, doc in enumerate(opts.get("maps", [])):
        try:
            extra.append(from_dict(doc))
        except ReplidynError as exc:
            raise ConfigError(f"catalog.maps[{i}]: {exc}") from None
    samples = int(opts.get("samples", 10_000))
    sop = closure_suite(samples=samples, seed=seed, extra=extra)
    grads = gradient_suite(seed=seed)
    violations = sum(r.violations for r in sop)
    grad_fail = [g for g in grads if not g.passed]
    doc = {
        "seed": seed,
        "samples": samples,
        "sop_checks": len(sop),
        "sop_violations": violations,
        "gradient_checks": len(grads),
        "gradient_failures": len(grad_fail),
        "sop": [r.to_dict() for r in sop],
        "gradients": [g.to_dict() for g in grads],
    }
    out_dir = Path(out or (cfg.output_dir if cfg else "out"))
    atomic_write_json(out_dir / "catalog_report.json", doc)
    print(f"SOP checks: {len(sop)}, violations: {violations}; gradient checks: {len(grads)}, failures: {len(grad_fail)}")
    return EXIT_OK if violations == 0 and not grad_fail else EXIT_CERTIFICATE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replidyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (JSON)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")

    common(sub.add_parser("simulate", help="iterate an orbit and write CSV + JSON sidecar"))
    common(sub.add_parser("verify-folk", help="certify the four folk-theorem clauses (stable kind)"))
    common(sub.add_parser("verify-historic", help="certify historic behavior (zero-sum kind)"))
    cat = sub.add_parser("catalog", help="list the fitness catalog or check it")
    cat.add_argument("action", choices=("list", "check"))
    common(cat, config_required=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "catalog":
            cfg = load_config(args.config, args.seed, args.out) if args.config else None
            return cmd_catalog(args.action, cfg, args.seed, args.out)
        cfg = load_config(args.config, args.seed, args.out)
        handler = {"simulate": cmd_simulate, "verify-folk": cmd_verify_folk, "verify-historic": cmd_verify_historic}
        return handler[args.command](cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        log.error("invariant violation: %s", exc)
        return EXIT_NUMERIC
    except InsufficientDataError as exc:
        log.error("insufficient data: %s", exc)
        return EXIT_INSUFFICIENT


if __name__ == "__main__":
    sys.exit(main())
