import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import structlog
from dotenv import load_dotenv

from fakeindex.builder import BuildConfig, build_index
from fakeindex.codec import load_index, save_index
from harness.ab import TSV_HEADER, ArtifactBundle, simulate_ab
from harness.metrics import compute_metrics
from logstore.context import ContextWindows
from logstore.docstore import DocStore
from logstore.ingest import load_corpus, write_corpus
from logstore.models import UserContext
from logstore.synth import SimConfig, split_by_user, synthesize_logs
from mining.dataset import build_dataset, load_dataset, write_dataset
from mining.models import MiningThresholds
from mining.verifier import make_verifier
from policy.params_io import load_params, save_params
from policy.softmax import distribution
from reward.oracle import build_oracle, load_oracle, save_oracle
from serving.flow import DEFAULT_RELEVANCE_THRESHOLD, serve
from serving.latency import LatencyModel
from trainer.loop import TrainConfig, train
from utils.config import Settings, load_config, parse_config
from utils.errors import RewriteError, TrainingDivergedError
from utils.jsonl import read_jsonl, write_jsonl
from utils.validation import validate_query, validate_search_request

logger = structlog.get_logger()


def configure_logging(settings: Settings) -> None:
    """structlog over stdlib logging on stderr; stdout is reserved for command output"""
    logging.basicConfig(
        stream=sys.stderr,
        format="%(message)s",
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        force=True,
    )
    renderer = (
        structlog.dev.ConsoleRenderer()
        if settings.log_format == "console"
        else structlog.processors.JSONRenderer()
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


def _windows(settings: Settings) -> ContextWindows:
    return ContextWindows(h_query=settings.h_query_window, h_video=settings.h_video_window)


def _thresholds(args: argparse.Namespace) -> MiningThresholds:
    return parse_config(MiningThresholds, {
        "tau_short": args.tau_short, "tau_valid": args.tau_valid, "tau_long": args.tau_long,
    })


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _write_json(path: Optional[str], payload: Dict[str, Any]) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args: argparse.Namespace, settings: Settings) -> int:
    sim = load_config(SimConfig, args.config) if args.config else SimConfig()
    corpus = synthesize_logs(sim, args.seed, _windows(settings), settings.session_gap_s)
    train_corpus, test_corpus = split_by_user(corpus, sim.test_fraction, args.seed)

    out = Path(args.out)
    write_corpus(train_corpus, out / "train")
    write_corpus(test_corpus, out / "test")
    _emit({
        "out": str(out),
        "docs": len(corpus.docs),
        "sessions": len(corpus.sessions),
        "planted": len(corpus.ground_truth or ()),
        "train_users": len(train_corpus.user_ids()),
        "test_users": len(test_corpus.user_ids()),
    })
    return 0


def cmd_mine(args: argparse.Namespace, settings: Settings) -> int:
    corpus = load_corpus(args.logs, settings.session_gap_s)
    samples, report = build_dataset(
        corpus, _thresholds(args), make_verifier(args.verifier), _windows(settings), settings.workers,
    )
    write_dataset(samples, args.out, with_prompt=args.with_prompt)
    payload = report.model_dump(mode="json")
    _write_json(args.report, payload)
    _emit(payload)
    return 0


def cmd_build_oracle(args: argparse.Namespace, settings: Settings) -> int:
    oracle = build_oracle(load_corpus(args.logs, settings.session_gap_s), args.window_days)
    save_oracle(oracle, args.out)
    _emit({"queries": len(oracle), "window_days": oracle.window_days, "out": args.out})
    return 0


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    cfg = load_config(TrainConfig, args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    dataset = load_dataset(args.dataset)
    oracle = load_oracle(args.oracle)
    try:
        params, report = train(dataset, oracle, cfg)
    except TrainingDivergedError as e:
        if e.report is not None:
            _write_json(args.report, e.report.model_dump())
        raise
    save_params(params, args.out)
    _write_json(args.report, report.model_dump())
    _emit({
        "usable_samples": report.usable_samples,
        "skipped_samples": report.skipped_samples,
        "post_sft_expected_reward": report.post_sft_expected_reward,
        "final_expected_reward": report.final_expected_reward,
        "out": args.out,
    })
    return 0


def cmd_build_index(args: argparse.Namespace, settings: Settings) -> int:
    cfg = parse_config(BuildConfig, {"k": args.k, "head_min_clicks": args.head_min_clicks})
    index = build_index(load_corpus(args.logs, settings.session_gap_s), cfg)
    save_index(index, args.out)
    _emit({"entries": len(index), "k": index.k, "out": args.out})
    return 0


def cmd_serve_sim(args: argparse.Namespace, settings: Settings) -> int:
    params = load_params(args.params)
    index = load_index(args.index)
    oracle = load_oracle(args.oracle)
    docstore = DocStore.from_jsonl(args.docs)
    lat = load_config(LatencyModel, args.latency) if args.latency else LatencyModel()

    results = []
    for lineno, row in read_jsonl(args.requests):
        req = validate_search_request(row, lineno)
        results.append(serve(req, params, index, oracle, docstore, lat, args.relevance_threshold,
                             not args.allow_unshared_terms))
    count = write_jsonl(args.out, (r.to_dict() for r in results))
    _emit({
        "requests": count,
        "rewrites_used": sum(1 for r in results if r.rewrite_used is not None),
        "index_hits": sum(1 for r in results if r.index_hit),
        "out": args.out,
    })
    return 0


def cmd_policy_eval(args: argparse.Namespace, settings: Settings) -> int:
    params = load_params(args.params)
    oracle = load_oracle(args.oracle)
    context = UserContext()
    if args.context:
        context = UserContext.from_dict(json.loads(Path(args.context).read_text(encoding="utf-8")))
    dist = distribution(params, validate_query(args.query), context, oracle)
    for candidate, p in sorted(zip(dist.candidates, dist.probs), key=lambda item: -item[1]):
        print(f"{p:.6f}\t{candidate.provenance.value}\t{candidate.text}")
    return 0


def cmd_ab(args: argparse.Namespace, settings: Settings) -> int:
    sim = load_config(SimConfig, args.config) if args.config else SimConfig()
    lat = load_config(LatencyModel, args.latency) if args.latency else LatencyModel()
    train_corpus = load_corpus(args.train_logs, settings.session_gap_s)
    test_corpus = load_corpus(args.test_logs, settings.session_gap_s)
    artifacts = ArtifactBundle(
        params=load_params(args.params),
        index=load_index(args.index),
        oracle=load_oracle(args.oracle),
        docstore=DocStore(test_corpus.docs),
        train_users=train_corpus.user_ids(),
    )
    report = simulate_ab(sim, artifacts, test_corpus, args.seed, lat, windows=_windows(settings))
    payload = report.model_dump(mode="json")
    _write_json(args.out, payload)
    _emit(payload)
    print(TSV_HEADER)
    print(report.tsv_line())
    return 0


def cmd_metrics(args: argparse.Namespace, settings: Settings) -> int:
    corpus = load_corpus(args.logs, settings.session_gap_s)
    _emit(compute_metrics(corpus.sessions, _thresholds(args)).model_dump())
    return 0


def _add_thresholds(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tau-short", type=float, default=2.4)
    parser.add_argument("--tau-valid", type=float, default=10.0)
    parser.add_argument("--tau-long", type=float, default=30.0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")

    parser = argparse.ArgumentParser(prog="rewrite-agent", description="Demand-aware query rewriting pipeline")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common], help="synthesize train/test logs")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("mine", parents=[common], help="mine the training dataset from logs")
    p.add_argument("--logs", required=True)
    _add_thresholds(p)
    p.add_argument("--verifier", default="reference")
    p.add_argument("--with-prompt", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_mine)

    p = sub.add_parser("build-oracle", parents=[common], help="build the reward oracle")
    p.add_argument("--logs", required=True)
    p.add_argument("--window-days", type=int, default=180)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_build_oracle)

    p = sub.add_parser("train", help="SFT + GRPO training")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--dataset", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("build-index", parents=[common], help="build the fake index")
    p.add_argument("--logs", required=True)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--head-min-clicks", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_build_index)

    p = sub.add_parser("serve-sim", parents=[common], help="serve requests on the simulated clock")
    for flag in ("--params", "--index", "--oracle", "--docs", "--requests", "--out"):
        p.add_argument(flag, required=True)
    p.add_argument("--latency")
    p.add_argument("--relevance-threshold", type=float, default=DEFAULT_RELEVANCE_THRESHOLD)
    p.add_argument("--allow-unshared-terms", action="store_true",
                   help="keep fake docs that share no term with the query")
    p.set_defaults(handler=cmd_serve_sim)

    p = sub.add_parser("policy", help="inspect a trained policy")
    policy_sub = p.add_subparsers(dest="policy_command", required=True, metavar="ACTION")
    pe = policy_sub.add_parser("eval", parents=[common], help="print the rewrite distribution for a query")
    pe.add_argument("--params", required=True)
    pe.add_argument("--oracle", required=True)
    pe.add_argument("--query", required=True)
    pe.add_argument("--context")
    pe.set_defaults(handler=cmd_policy_eval)

    p = sub.add_parser("ab", parents=[common], help="simulated A/B test")
    for flag in ("--train-logs", "--test-logs", "--params", "--index", "--oracle"):
        p.add_argument(flag, required=True)
    p.add_argument("--config")
    p.add_argument("--latency")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_ab)

    p = sub.add_parser("metrics", parents=[common], help="log metrics")
    p.add_argument("--logs", required=True)
    _add_thresholds(p)
    p.set_defaults(handler=cmd_metrics)

    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = Settings.from_env()
        configure_logging(settings)
        handler: Callable[[argparse.Namespace, Settings], int] = args.handler
        return handler(args, settings)
    except RewriteError as e:
        logger.error("Command failed", command=args.command, category=e.category, error=e.message)
        print(e.describe(), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error("Unexpected error", command=args.command, error=str(e), exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(cli_main())
