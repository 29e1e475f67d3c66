"""Command-line front door: ingest datasets, train models, run replays,
sweep the objective weight, and assemble comparison tables.

Layout conventions:

- a dataset directory holds ``events.jsonl``, ``manifest.json`` and
  ``developers.json`` (slot counts for the active developers);
- a models directory holds ``suitability.json``, ``topics.json`` and
  ``costs.json``;
- every run writes into ``--out`` and overwrites deterministically.

Exit codes: 0 success, 2 usage, 3 ingest, 4 training, 5 solve budget
exhausted without a feasible incumbent, 6 plan validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import date
from typing import Dict, List, Optional, Sequence, Tuple

from .costs import CostMatrix, build_cost_matrix
from .ingest import (
    BugzillaClient,
    DatasetManifest,
    EmptyHistoryError,
    FetchError,
    MalformedRecordError,
    RawEvent,
    apply_filters,
    estimate_slot_counts,
    events_to_records,
    identify_active_developers,
    load_event_log,
    save_event_log,
)
from .metrics import (
    AllZeroDifferencesError,
    component_experience,
    compute_report,
    utilization_slots,
    weekly_average,
    wilcoxon_signed_rank,
    write_report_csv,
)
from .model import DeveloperProfile
from .sim import (
    SimulationConfig,
    SimulationLedger,
    TrainedParamProvider,
    ValidationFailure,
    resolve_horizon,
    run,
)
from .strategies import SolveWithoutIncumbentError
from .text import (
    EmptyVocabularyError,
    SingleClassCorpusError,
    SuitabilityModel,
    preprocess,
)
from .topics import DegenerateCorpusError, TopicModel, fit_topics, select_topic_count

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGEST = 3
EXIT_TRAIN = 4
EXIT_SOLVE = 5
EXIT_VALIDATION = 6

DEFAULT_CONFIG: Dict[str, object] = {
    "alpha": 0.5,
    "horizon": "auto",
    "seed": 0,
    "svm_c": 1000.0,
    "topic_count": None,
    "topic_candidates": [2, 3, 4, 5, 6, 7, 8],
    "gibbs_burn_in": 500,
    "gibbs_samples": 100,
    "cf_neighborhood": 5,
    "node_budget": 5_000_000,
    "time_budget": None,
    "off_days": [],
}


class CliError(RuntimeError):
    def __init__(self, exit_code: int, message: str):
        self.exit_code = exit_code
        super().__init__(message)


def load_config(path: Optional[str], overrides: Dict[str, object]) -> Dict[str, object]:
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_USAGE, f"cannot read config {path}: {exc}")
        unknown = set(loaded) - set(DEFAULT_CONFIG)
        if unknown:
            raise CliError(EXIT_USAGE, f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    return config


def _write(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


# ---------------------------------------------------------------------------
# dataset and model IO
# ---------------------------------------------------------------------------

def _load_dataset(directory: str):
    try:
        events = load_event_log(os.path.join(directory, "events.jsonl"))
        with open(os.path.join(directory, "manifest.json")) as fh:
            manifest = DatasetManifest.from_json(fh.read())
        with open(os.path.join(directory, "developers.json")) as fh:
            slots = json.load(fh)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_USAGE, f"cannot load dataset from {directory}: {exc}")
    return events, manifest, {dev: int(n) for dev, n in slots.items()}


def _training_records(events: Sequence[RawEvent], manifest: DatasetManifest):
    train_events = [e for e in events if e.day <= manifest.train_window[1]]
    records = events_to_records(train_events)
    try:
        active = identify_active_developers(records)
    except EmptyHistoryError:
        return {}
    survivors, _ = apply_filters(
        records,
        active,
        project=manifest.project,
        train_window=manifest.train_window,
        test_window=manifest.test_window,
    )
    return survivors


def _load_models(directory: str):
    try:
        with open(os.path.join(directory, "suitability.json")) as fh:
            suitability = SuitabilityModel.from_json(fh.read())
        with open(os.path.join(directory, "topics.json")) as fh:
            topics = TopicModel.from_json(fh.read())
        with open(os.path.join(directory, "costs.json")) as fh:
            costs = CostMatrix.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_USAGE, f"cannot load models from {directory}: {exc}")
    return suitability, topics, costs


def _provider(dataset_dir: str, models_dir: str):
    events, manifest, slots = _load_dataset(dataset_dir)
    suitability, topics, costs = _load_models(models_dir)
    profiles = [
        DeveloperProfile(dev, slot_count=slots[dev]) for dev in sorted(slots)
    ]
    provider = TrainedParamProvider(profiles, suitability, topics, costs)
    return events, manifest, provider


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    os.makedirs(args.out, exist_ok=True)
    try:
        if args.dump is not None:
            events = load_event_log(args.dump)
        else:
            client = BugzillaClient(
                base_url=args.endpoint,
                cache_dir=args.cache_dir or os.path.join(args.out, "cache"),
                epoch=date.fromisoformat(args.epoch),
            )
            events = client.fetch_project(
                args.project, (args.train_window[0], args.test_window[1])
            )
        records = events_to_records(
            [e for e in events if e.day <= args.train_window[1]]
        )
        active = identify_active_developers(records)
        survivors, manifest = apply_filters(
            records,
            active,
            project=args.project,
            train_window=tuple(args.train_window),
            test_window=tuple(args.test_window),
        )
        slots = estimate_slot_counts(survivors, sorted(active))
    except (MalformedRecordError, EmptyHistoryError, FetchError, OSError, ValueError) as exc:
        print(f"ingest failed: {exc}", file=sys.stderr)
        return EXIT_INGEST

    save_event_log(events, os.path.join(args.out, "events.jsonl"))
    _write(os.path.join(args.out, "manifest.json"), manifest.to_json())
    _write(
        os.path.join(args.out, "developers.json"),
        json.dumps(slots, sort_keys=True),
    )
    for stage in sorted(manifest.stage_counts):
        print(f"stage {stage}: {manifest.stage_counts[stage]} bugs")
    print(f"active developers: {len(slots)}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, {"seed": args.seed, "topic_count": args.topics})
    os.makedirs(args.out, exist_ok=True)
    events, manifest, _ = _load_dataset(args.dataset)
    survivors = _training_records(events, manifest)
    if not survivors:
        print("training failed: no usable bugs in the training window", file=sys.stderr)
        return EXIT_TRAIN

    order = sorted(survivors)
    documents = [
        preprocess(survivors[b].summary, survivors[b].description) for b in order
    ]
    labels = [survivors[b].actual_assignee for b in order]
    try:
        suitability = SuitabilityModel.train(
            documents, labels, C=float(config["svm_c"])
        )
        k = config["topic_count"]
        divergences: Dict[int, float] = {}
        if k is None:
            k, divergences = select_topic_count(
                documents,
                candidates=list(config["topic_candidates"]),
                seed=int(config["seed"]),
            )
        topics = fit_topics(
            documents,
            int(k),
            burn_in=int(config["gibbs_burn_in"]),
            samples=int(config["gibbs_samples"]),
            seed=int(config["seed"]),
        )
        history = [
            (labels[i], topics.topic_of(documents[i]), survivors[b].fixing_time_days)
            for i, b in enumerate(order)
        ]
        costs = build_cost_matrix(
            sorted(set(labels)),
            int(k),
            history,
            neighborhood=int(config["cf_neighborhood"]),
        )
    except (SingleClassCorpusError, EmptyVocabularyError, DegenerateCorpusError,
            EmptyHistoryError, ValueError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN

    _write(os.path.join(args.out, "suitability.json"), suitability.to_json())
    _write(os.path.join(args.out, "topics.json"), topics.to_json())
    _write(os.path.join(args.out, "costs.json"), costs.to_json())
    _write(
        os.path.join(args.out, "training.json"),
        json.dumps(
            {
                "topic_count": int(k),
                "topic_divergences": {str(c): v for c, v in divergences.items()},
                "documents": len(documents),
            },
            sort_keys=True,
        ),
    )
    print(f"trained on {len(documents)} bugs, K={k}")
    return EXIT_OK


def _build_sim_config(config: Dict[str, object], manifest, strategy: str,
                      alpha: Optional[float], lp_dir: Optional[str]) -> SimulationConfig:
    return SimulationConfig(
        strategy=strategy,
        alpha=float(config["alpha"] if alpha is None else alpha),
        horizon=config["horizon"],
        seed=int(config["seed"]),
        node_budget=int(config["node_budget"]),
        time_budget=config["time_budget"],
        test_window=tuple(manifest.test_window),
        off_days=set(config["off_days"]),
        lp_dir=lp_dir,
    )


def _simulate_once(events, manifest, provider, sim_config: SimulationConfig):
    if sim_config.horizon == "auto":
        survivors = _training_records(events, manifest)
        if not survivors:
            raise CliError(
                EXIT_TRAIN, "cannot derive a horizon: empty training window"
            )
        sim_config.horizon = resolve_horizon(sim_config, survivors)
    ledger = run(sim_config, events, provider)
    experience = component_experience(_training_records(events, manifest))
    report = compute_report(ledger, experience, events)
    return ledger, report


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config, {
        "alpha": args.alpha,
        "horizon": args.horizon,
        "seed": args.seed,
        "node_budget": args.node_budget,
        "time_budget": args.time_budget,
    })
    os.makedirs(args.out, exist_ok=True)
    lp_dir = None
    if args.dump_lp:
        lp_dir = os.path.join(args.out, "lp")
        os.makedirs(lp_dir, exist_ok=True)
    events, manifest, provider = _provider(args.dataset, args.models)
    sim_config = _build_sim_config(config, manifest, args.strategy, None, lp_dir)
    try:
        ledger, report = _simulate_once(events, manifest, provider, sim_config)
    except ValidationFailure as exc:
        print(f"plan validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolveWithoutIncumbentError as exc:
        print(f"solve budget exhausted: {exc}", file=sys.stderr)
        return EXIT_SOLVE

    _write(os.path.join(args.out, "ledger.json"), ledger.to_json())
    _write(os.path.join(args.out, "report.json"), report.to_json())
    write_report_csv(
        os.path.join(args.out, "report.csv"), [(manifest.project, report)]
    )
    ledger.write_daily_csv(os.path.join(args.out, "days.csv"))
    print(
        f"{args.strategy}: {report.assigned_count} assigned, "
        f"{report.unassigned_count} unassigned, "
        f"accuracy {report.accuracy_pct:.1f}%"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config, {
        "horizon": args.horizon,
        "seed": args.seed,
    })
    os.makedirs(args.out, exist_ok=True)
    events, manifest, provider = _provider(args.dataset, args.models)
    alphas = args.alphas

    def one(alpha: float):
        sim_config = _build_sim_config(config, manifest, args.strategy, alpha, None)
        return _simulate_once(events, manifest, provider, sim_config)

    try:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, alphas))
    except ValidationFailure as exc:
        print(f"plan validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolveWithoutIncumbentError as exc:
        print(f"solve budget exhausted: {exc}", file=sys.stderr)
        return EXIT_SOLVE

    path = os.path.join(args.out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "accuracy_pct", "overdue_pct"])
        for alpha, (_, report) in zip(alphas, results):
            writer.writerow([alpha, report.accuracy_pct, report.overdue_pct])
    print(f"wrote {path} ({len(alphas)} rows)")
    return EXIT_OK


def _pairwise_tests(ledgers: Sequence[SimulationLedger]) -> List[Dict[str, object]]:
    out: List[Dict[str, object]] = []

    def p_or_undefined(a: Sequence[float], b: Sequence[float]) -> object:
        try:
            return wilcoxon_signed_rank(a, b, "greater")
        except AllZeroDifferencesError:
            return "undefined"

    for i, first in enumerate(ledgers):
        for second in ledgers[i + 1:]:
            n = min(len(first.days), len(second.days))
            out.append(
                {
                    "a": first.strategy.value,
                    "b": second.strategy.value,
                    "weekly_slot_utilization_greater": p_or_undefined(
                        weekly_average(utilization_slots(first)[:n]),
                        weekly_average(utilization_slots(second)[:n]),
                    ),
                    "daily_assigned_greater": p_or_undefined(
                        [len(d.assigned) for d in first.days[:n]],
                        [len(d.assigned) for d in second.days[:n]],
                    ),
                }
            )
    return out


def cmd_compare(args: argparse.Namespace) -> int:
    events, manifest, _ = _load_dataset(args.dataset)
    experience = component_experience(_training_records(events, manifest))
    os.makedirs(args.out, exist_ok=True)

    ledgers: List[SimulationLedger] = []
    for path in args.ledgers:
        try:
            with open(path) as fh:
                ledgers.append(SimulationLedger.from_json(fh.read()))
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(EXIT_USAGE, f"cannot load ledger {path}: {exc}")

    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        reports = list(
            pool.map(lambda led: compute_report(led, experience, events), ledgers)
        )

    write_report_csv(
        os.path.join(args.out, "comparison.csv"),
        [(manifest.project, report) for report in reports],
    )
    tests = _pairwise_tests(ledgers)
    _write(
        os.path.join(args.out, "tests.json"),
        json.dumps({"pairwise_one_sided": tests}, indent=2, sort_keys=True),
    )
    for row in tests:
        print(
            f"{row['a']} vs {row['b']}: utilization p={row['weekly_slot_utilization_greater']}"
            f", assigned p={row['daily_assigned_greater']}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _alpha_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list: {text!r}")


def _horizon(text: str):
    if text == "auto":
        return "auto"
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triagesim",
        description="Bug triage optimization and issue-tracker replay.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fetch or import an event log and build a dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dump", help="existing event-log JSONL file")
    src.add_argument("--endpoint", help="REST base URL")
    p.add_argument("--project", required=True)
    p.add_argument("--epoch", default="2010-01-01", help="date for day index 0")
    p.add_argument("--cache-dir")
    p.add_argument("--train-window", nargs=2, type=int, required=True, metavar=("START", "END"))
    p.add_argument("--test-window", nargs=2, type=int, required=True, metavar=("START", "END"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit the suitability, topic, and cost models")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--topics", type=int, help="fixed topic count (default: select)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="replay the test window under one strategy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--strategy", required=True,
                   choices=["actual", "cbr", "costriage", "rabt", "dabt", "sdabt"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--horizon", type=_horizon)
    p.add_argument("--seed", type=int)
    p.add_argument("--node-budget", type=int, dest="node_budget")
    p.add_argument("--time-budget", type=float, dest="time_budget")
    p.add_argument("--config")
    p.add_argument("--dump-lp", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run one strategy across several alpha values")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--strategy", default="sdabt",
                   choices=["cbr", "costriage", "rabt", "dabt", "sdabt"])
    p.add_argument("--alphas", type=_alpha_list, required=True,
                   help="comma-separated, e.g. 0,0.5,1")
    p.add_argument("--horizon", type=_horizon)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="metrics table and paired tests over ledgers")
    p.add_argument("ledgers", nargs="+", help="ledger JSON files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--jobs", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
