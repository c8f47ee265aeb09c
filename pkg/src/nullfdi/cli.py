"""Command-line front end: ``nullfdi <command> [flags]``.

Every command builds a report ``{command, inputs, verdicts, metrics, artifacts}``.
With ``--out`` the report and any artifacts are written to that directory;
otherwise the report is printed. Exit codes: 0 success, 2 validation failure,
1 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import lti
from .closedloop import (ClosedLoopError, DecisionConfig, FaultScenario, build_closed_loop,
                         calibrate_thresholds, decide, simulate_segmented,
                         write_decisions_csv, write_result_csv)
from .isolability import (StructureMatrix, is_completely_detectable, is_s_isolable,
                          is_strongly_isolable, is_weakly_isolable, make_structure)
from .lti import StateSpaceModel
from .plant import PartitionedPlant
from .serialize import dumps, load_model, load_plant, read_json, write_json
from .synthesis import (FilterBank, SynthesisError, SynthesisOptions, synthesize_bank,
                        synthesize_detector)
from .verification import theorem_suite
from .wafer import run_case_study

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2
STRUCTURE_KINDS = ("strong", "hollow", "wafer17")


class ValidationError(Exception):
    """Input that parses but violates a precondition; maps to exit code 2."""

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.detail = detail or {}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract reserves 2 for
    # validation failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _report(command: str, inputs: dict, verdicts=(), metrics=None, artifacts=()) -> dict:
    return {"command": command, "inputs": inputs, "verdicts": list(verdicts),
            "metrics": metrics or {}, "artifacts": list(artifacts)}


def _verdict(name: str, passed: bool, detail: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _need(args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError(f"{args.command} requires {', '.join(missing)}")


def _load(loader, path, what):
    try:
        return loader(path)
    except FileNotFoundError:
        raise ValidationError(f"{what} file not found: {path}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"invalid {what} file {path}: {exc}") from None


def _structure(arg: str | None, n_f: int) -> StructureMatrix | None:
    if arg is None:
        return None
    if arg in STRUCTURE_KINDS:
        try:
            return make_structure(arg, n_f)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
    s = _load(lambda p: StructureMatrix.from_text(Path(p).read_text()), arg, "structure")
    if s.n_faults != n_f:
        raise ValidationError(f"structure has {s.n_faults} columns, plant has n_f = {n_f}")
    return s


def _options(args) -> SynthesisOptions:
    try:
        return SynthesisOptions(mode=args.mode, gamma=args.gamma)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _time_scaled(plant: PartitionedPlant, pct: float) -> PartitionedPlant:
    """``G(s / (1 + pct/100))``: every pole frequency scaled, DC gain kept."""
    k = 1.0 + pct / 100.0
    m = plant.model
    model = StateSpaceModel(k * m.a, k * m.b, m.c, m.d, m.ts)
    return PartitionedPlant(model, plant.n_u, plant.n_d, plant.n_w, plant.n_f)


def cmd_analyze(args) -> dict:
    _need(args, "plant")
    plant = _load(load_plant, args.plant, "plant")
    if plant.n_f < 1:
        raise ValidationError("plant has no fault inputs")
    detect = is_completely_detectable(plant)
    verdicts = [_verdict("complete_detectability", all(detect),
                         f"undetectable faults: {[j + 1 for j, ok in enumerate(detect) if not ok]}")]
    metrics = {"detectable": detect}
    s = _structure(args.structure, plant.n_f)
    if s is not None:
        rep = is_s_isolable(plant, s)
        fails = [[i + 1, j + 1] for i, j in rep.failures()]
        verdicts.append(_verdict("s_isolability", rep.passed, f"failing (row, fault): {fails}"))
        metrics["s_isolability_failures"] = fails
    verdicts.append(_verdict("strong_isolability", is_strongly_isolable(plant)))
    if plant.n_f >= 2:
        weak, pairs = is_weakly_isolable(plant)
        verdicts.append(_verdict("weak_isolability", weak,
                                 f"failing pairs: {[[i + 1, j + 1] for i, j in pairs]}"))
    metrics.update(plant.partitions())
    metrics["n_y"] = plant.n_y
    return _report("analyze", {"plant": args.plant, "structure": args.structure},
                   verdicts, metrics)


def cmd_synth(args) -> dict:
    _need(args, "plant")
    plant = _load(load_plant, args.plant, "plant")
    s = _structure(args.structure, plant.n_f)
    opts = _options(args)
    if s is None:
        bank = synthesize_detector(plant, opts)
    else:
        bank = synthesize_bank(plant, s, opts)
    errors = [float(e) for e in bank.decoupling_errors]
    verdicts = [
        _verdict("decoupling", max(errors, default=0.0) <= 1e-6,
                 f"max relative |R_u|, |R_d| = {max(errors, default=0.0):.3g}"),
        _verdict("structure", bank.achieved_structure == bank.target),
        _verdict("stable", all(lti.is_stable(f) for f in bank.filters)),
    ]
    metrics = {"n_filters": len(bank), "filter_orders": [f.n_states for f in bank.filters],
               "beta": bank.beta, "eta": list(bank.gaps), "decoupling_errors": errors,
               "achieved_structure": bank.achieved_structure.entries.tolist()}
    artifacts = []
    if args.out:
        write_json(Path(args.out) / "bank.json", bank.to_dict())
        artifacts.append("bank.json")
    return _report("synth", {"plant": args.plant, "structure": args.structure,
                             "mode": args.mode, "gamma": args.gamma},
                   verdicts, metrics, artifacts)


def cmd_simulate(args) -> dict:
    _need(args, "plant", "controller", "bank", "scenario")
    plant = _load(load_plant, args.plant, "plant")
    ctrl = _load(load_model, args.controller, "controller")
    bank = _load(lambda p: FilterBank.from_dict(read_json(p)), args.bank, "bank")
    scenario = _load(lambda p: FaultScenario.from_dict(read_json(p)), args.scenario,
                     "scenario")
    if args.rate is not None:
        scenario = FaultScenario(scenario.duration, 1.0 / args.rate, scenario.reference,
                                 scenario.events)
    if (bank.n_y, bank.n_u, bank.target.n_faults) != (plant.n_y, plant.n_u, plant.n_f) \
            or ctrl.shape != (plant.n_u, plant.n_y):
        raise ValidationError("plant, controller and bank dimensions disagree")
    if any(ev.fault > plant.n_f for ev in scenario.events):
        raise ValidationError("scenario references a fault index beyond n_f")
    true_plant = _time_scaled(plant, args.mismatch) if args.mismatch else None
    system = build_closed_loop(plant, ctrl, bank)
    config = DecisionConfig()
    ts = scenario.sample_time
    # Each event is simulated from rest and superposed on the fault-free run,
    # so a slowly decaying tail cannot mask the next fault's signature.
    result, calib = simulate_segmented(system, scenario, true_plant)
    thresholds = calibrate_thresholds(calib.residuals, ts, config)
    trace = decide(result.residuals, bank.target, thresholds, ts, config)
    verdicts = []
    for ev in scenario.events:
        win = (result.time >= ev.t_start) & (result.time < ev.t_end)
        hit = bool(np.any(trace.isolated[win] == ev.fault))
        verdicts.append(_verdict(f"fault_{ev.fault}_isolated", hit,
                                 f"window [{ev.t_start}, {ev.t_end}) s"))
    artifacts = []
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_result_csv(out / "residuals.csv", result)
        write_decisions_csv(out / "decisions.csv", result.time, trace)
        artifacts += ["residuals.csv", "decisions.csv"]
    metrics = {"n_samples": int(result.time.size), "thresholds": thresholds.tolist(),
               "max_fault_free_residual": float(np.max(np.abs(calib.residuals)))}
    return _report("simulate", {"plant": args.plant, "controller": args.controller,
                                "bank": args.bank, "scenario": args.scenario,
                                "mismatch_pct": args.mismatch, "rate_hz": 1.0 / ts},
                   verdicts, metrics, artifacts)


def cmd_verify_theorems(args) -> dict:
    seed = 0 if args.seed is None else args.seed
    verdicts, metrics = [], {}
    for theorem in (1, 2):
        reps = theorem_suite(theorem, 25, seed)
        ok = sum(r.verdict for r in reps)
        verdicts.append(_verdict(f"theorem_{theorem}", ok == len(reps),
                                 f"{ok}/{len(reps)} cases hold"))
        metrics[f"theorem_{theorem}"] = [r.to_dict() for r in reps]
    return _report("verify-theorems", {"seed": seed, "n_cases": 25}, verdicts, metrics)


def cmd_case_study(args) -> dict:
    seed = 7 if args.seed is None else args.seed
    rate = 10_000.0 if args.rate is None else args.rate
    report = run_case_study(seed, mismatch=args.mismatch or 0.0, rate_hz=rate,
                            out_dir=args.out)
    return {k: v for k, v in report.items() if not k.startswith("_")}


COMMANDS = {
    "analyze": (cmd_analyze, "detectability and isolability verdicts for a plant"),
    "synth": (cmd_synth, "synthesize a residual generator bank"),
    "simulate": (cmd_simulate, "closed-loop fault scenario simulation"),
    "verify-theorems": (cmd_verify_theorems, "seeded open/closed-loop nullspace checks"),
    "case-study": (cmd_case_study, "wafer-stage case study with 17 faults"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nullfdi",
                     description="Nullspace-based fault detection and isolation toolbox.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--plant", help="plant JSON (state space with partitions)")
        p.add_argument("--controller", help="controller JSON")
        p.add_argument("--structure",
                       help="structure matrix file (CSV or JSON) or one of "
                            + ", ".join(STRUCTURE_KINDS))
        p.add_argument("--scenario", help="scenario JSON")
        p.add_argument("--bank", help="filter bank JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--mode", choices=("exact", "soft"), default="exact",
                       help="decoupling mode for synthesis")
        p.add_argument("--gamma", type=float, default=1.0, help="admissible noise gain")
        p.add_argument("--mismatch", type=float, default=0.0, metavar="PCT",
                       help="modal-frequency mismatch of the simulated plant in percent")
        p.add_argument("--rate", type=float, metavar="HZ", help="simulation sample rate")
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.rate is not None and not args.rate > 0:
        parser.error("--rate must be positive")
    func = COMMANDS[args.command][0]
    try:
        report = func(args)
    except SynthesisError as exc:
        err = {"error": str(exc), "condition": exc.condition,
               "failing": [[i + 1, j + 1] for i, j in exc.failing]}
        sys.stderr.write(dumps(err))
        return EXIT_VALIDATION
    except (ValidationError, ClosedLoopError, ValueError, RuntimeError) as exc:
        err = {"error": str(exc), **getattr(exc, "detail", {})}
        sys.stderr.write(dumps(err))
        return EXIT_VALIDATION
    if args.out:
        if "report.json" not in report["artifacts"]:
            report["artifacts"].append("report.json")
        write_json(Path(args.out) / "report.json", report)
    for v in report["verdicts"]:
        status = "PASS" if v["passed"] else "FAIL"
        print(f"{status} {v['name']}" + (f": {v['detail']}" if v.get("detail") else ""))
    if not args.out:
        sys.stdout.write(dumps(report))
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
