"""Operator command line: generate data, train, calibrate, evaluate, serve,
and replay scripted sessions.

Every command prints a machine-readable JSON summary on stdout and exits
nonzero on failure: 3 for I/O problems, 4 for validation problems, 5 for
numeric divergence (argparse itself uses 2 for usage errors).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import calibrate, load_calibration, retrieve_hypotheses, save_calibration
from .dataio import (
    BUNDLED_SCHEMA_PATH,
    generate_synthetic,
    load_cases,
    load_schema,
    split,
    write_dataset,
)
from .domain import InterventionEvent
from .engine import SessionConfig, SessionContext, check_acceptance, init_session, apply_event
from .errors import CorruptLogError, NonfiniteLossError, ParseError, SenseloopError
from .scoring import assemble_vector, load_weights, save_weights, score_batch, train

EXIT_OK = 0
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_DIVERGENCE = 5


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def _dataset_vectors(args, schema):
    cases, problems = load_cases(args.cases, args.probs, schema)
    if problems:
        names = ", ".join(p.case_id for p in problems[:5])
        raise ValueError(
            f"{len(problems)} case(s) failed validation (first: {names}); "
            f"fix the dataset first")
    return [(assemble_vector(c, (), schema), c.true_diagnosis) for c in cases], cases


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios must be train,cal,test")
    return parts[0], parts[1], parts[2]


def cmd_generate(args) -> int:
    schema = load_schema(args.schema) if args.schema else load_schema(BUNDLED_SCHEMA_PATH)
    cases, planted = generate_synthetic(
        seed=args.seed, n=args.n, schema=schema, noise=args.noise,
        weight_scale=args.weight_scale)
    out = Path(args.out)
    write_dataset(out, cases, schema, planted=planted, assets=args.assets)
    _emit({
        "command": "generate",
        "out": str(out),
        "n": len(cases),
        "seed": args.seed,
        "noise": args.noise,
        "schema_hash": schema.schema_hash,
        "assets": bool(args.assets),
    })
    return EXIT_OK


def cmd_train(args) -> int:
    schema = load_schema(args.schema)
    vectors, cases = _dataset_vectors(args, schema)
    order = split(cases, args.ratios, args.seed)
    train_idx = {c.case_id for c in order[0]}
    train_set = [v for v, c in zip(vectors, cases) if c.case_id in train_idx]
    result = train(train_set, schema, seed=args.seed, epochs=args.epochs,
                   learning_rate=args.lr, l2=args.l2)
    X = np.stack([x for x, _ in train_set])
    y = np.array([schema.diagnosis_index(lab) for _, lab in train_set])
    accuracy = float((score_batch(result.weights, X).argmax(axis=1) == y).mean())
    save_weights(result.weights, args.out)
    _emit({
        "command": "train",
        "out": str(args.out),
        "n_train": len(train_set),
        "epochs": args.epochs,
        "initial_loss": result.loss_trace[0],
        "final_loss": result.final_loss,
        "loss_trace": result.loss_trace if args.full_trace else
            result.loss_trace[:: max(1, len(result.loss_trace) // 20)],
        "train_accuracy": accuracy,
    })
    return EXIT_OK


def cmd_calibrate(args) -> int:
    schema = load_schema(args.schema)
    weights = load_weights(args.weights, schema)
    vectors, cases = _dataset_vectors(args, schema)
    order = split(cases, args.ratios, args.seed)
    cal_ids = {c.case_id for c in order[1]}
    cal_set = [v for v, c in zip(vectors, cases) if c.case_id in cal_ids]
    calibration = calibrate(weights, cal_set, args.alpha, schema)
    save_calibration(calibration, args.out)
    _emit({
        "command": "calibrate",
        "out": str(args.out),
        "n_cal": calibration.n_cal,
        "alpha": calibration.alpha,
        "q_hat": None if calibration.q_hat == float("inf") else calibration.q_hat,
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    schema = load_schema(args.schema)
    weights = load_weights(args.weights, schema)
    calibration = load_calibration(args.calibration, schema)
    vectors, cases = _dataset_vectors(args, schema)
    order = split(cases, args.ratios, args.seed)
    test_ids = {c.case_id for c in order[2]}
    test_set = [(v, c) for v, c in zip(vectors, cases) if c.case_id in test_ids]
    hits = covered = 0
    set_sizes = []
    for (x, label), _ in test_set:
        retrieved = retrieve_hypotheses(calibration, weights, x, schema)
        set_sizes.append(len(retrieved))
        covered += label in retrieved
    X = np.stack([x for (x, _), _ in test_set])
    y = np.array([schema.diagnosis_index(lab) for (_, lab), _ in test_set])
    hits = int((score_batch(weights, X).argmax(axis=1) == y).sum())
    _emit({
        "command": "eval",
        "n_test": len(test_set),
        "accuracy": hits / len(test_set),
        "coverage": covered / len(test_set),
        "mean_set_size": float(np.mean(set_sizes)),
        "alpha": calibration.alpha,
    })
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_service_config

    config = load_service_config(args.config)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def cmd_replay(args) -> int:
    schema = load_schema(args.schema)
    weights = load_weights(args.weights, schema)
    calibration = load_calibration(args.calibration, schema)
    cases, _ = load_cases(args.cases, args.probs, schema)
    by_id = {c.case_id: c for c in cases}
    if args.case not in by_id:
        raise ValueError(f"case {args.case!r} not found in dataset")
    try:
        script = json.loads(Path(args.script).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"script {args.script}: {exc}") from exc
    if not isinstance(script, list):
        raise ParseError(f"script {args.script}: expected a JSON array of events")
    ctx = SessionContext(
        case=by_id[args.case], weights=weights, calibration=calibration,
        schema=schema, config=SessionConfig(delta=args.delta, tau_e=args.tau_e))
    session_id = args.session_id
    state = init_session(ctx, session_id)
    steps = [_step_summary(state)]
    for raw in script:
        try:
            event = InterventionEvent.from_dict({
                "event_id": raw.get("event_id", f"script-{raw.get('seq')}"),
                "session_id": session_id, "timestamp": "", **raw})
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptLogError(f"bad scripted event: {exc}") from exc
        state = apply_event(state, event, ctx)
        steps.append(_step_summary(state))
    _emit({
        "command": "replay",
        "case_id": args.case,
        "session_id": session_id,
        "steps": steps,
        "final_accepted": state.accepted,
        "final_state_digest": state.canonical_json(),
    })
    return EXIT_OK


def _step_summary(state) -> dict:
    acceptance = check_acceptance(state)
    return {
        "t": state.t,
        "evidence": [(e.concept_id, e.state_id, e.status.value) for e in state.evidence],
        "candidates": [(h.diagnosis_label, round(h.score, 6), h.newly_appeared)
                       for h in state.candidates()],
        "acceptance": None if acceptance is None else
            {"label": acceptance[0], "score": acceptance[1]},
        "accepted": state.accepted,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="senseloop",
        description="Concept-based diagnostic sensemaking toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_args(p, schema_required=True):
        p.add_argument("--schema", required=schema_required,
                       help="schema JSON file")
        p.add_argument("--cases", required=True, help="cases.csv path")
        p.add_argument("--probs", required=True, help="probs.json path")

    def add_split_args(p):
        p.add_argument("--ratios", type=_ratios, default=(0.6, 0.2, 0.2),
                       help="train,cal,test fractions (default 0.6,0.2,0.2)")
        p.add_argument("--seed", type=int, default=0, help="split seed")

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--schema", help="schema JSON (default: bundled dermoscopy schema)")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--n", type=int, required=True, help="number of cases")
    p.add_argument("--noise", type=float, default=0.1,
                   help="uniform mixing weight on concept probabilities")
    p.add_argument("--weight-scale", type=float, default=2.0,
                   help="stddev of the planted weight matrix")
    p.add_argument("--assets", action="store_true",
                   help="also write synthetic images and heatmaps")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train the diagnosis head")
    add_data_args(p)
    add_split_args(p)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.1, help="initial learning rate")
    p.add_argument("--l2", type=float, default=1e-3, help="weight penalty")
    p.add_argument("--full-trace", action="store_true",
                   help="emit the whole loss trace instead of a sample")
    p.add_argument("--out", required=True, help="weights JSON output path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("calibrate", help="calibrate conformal retrieval")
    add_data_args(p)
    add_split_args(p)
    p.add_argument("--weights", required=True, help="trained weights JSON")
    p.add_argument("--alpha", type=float, default=0.1, help="miscoverage level")
    p.add_argument("--out", required=True, help="calibration JSON output path")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("eval", help="accuracy, coverage, and set size on the test split")
    add_data_args(p)
    add_split_args(p)
    p.add_argument("--weights", required=True, help="trained weights JSON")
    p.add_argument("--calibration", required=True, help="calibration JSON")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("replay", help="apply a scripted event list to one case")
    add_data_args(p)
    p.add_argument("--case", required=True, help="case id to open")
    p.add_argument("--weights", required=True, help="trained weights JSON")
    p.add_argument("--calibration", required=True, help="calibration JSON")
    p.add_argument("--script", required=True, help="JSON array of events")
    p.add_argument("--delta", type=float, default=0.8, help="acceptance threshold")
    p.add_argument("--tau-e", type=float, default=0.5, dest="tau_e",
                   help="evidence extraction threshold")
    p.add_argument("--session-id", default="replay", help="session id for the run")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NonfiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (SenseloopError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
