"""Command-line front end.

Subcommands:
  run         execute one simulation from a config file and write metrics
  experiment  execute a sweep described by an experiment spec file
  verify      check a transaction result proof against a hyper-block file
  export-dag  run a simulation and dump one node's DAG as a text edge list
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_experiment_spec, load_sim_config
from .experiments import run_experiment
from .hashing import Reader, enc_bytes, enc_u32, enc_u64
from .hyperblock import HyperBlock, TxResultProof, verify_tx_result
from .metrics import rows_to_csv, rows_to_json_lines, rows_to_table, summarize, summary_row
from .simulator import SimConfig, run
from .utxo import TxResult


def write_hyperblock_file(hb: HyperBlock, n: int, f: int, seed: int) -> bytes:
    """Hyper-block container: public run parameters plus the block bytes."""
    return enc_u32(n) + enc_u32(f) + enc_u64(seed) + enc_bytes(hb.to_bytes())


def read_hyperblock_file(data: bytes) -> tuple[HyperBlock, int, int, int]:
    r = Reader(data)
    n = r.u32()
    f = r.u32()
    seed = r.u64()
    hb = HyperBlock.from_bytes(r.bytes_())
    r.expect_done()
    return hb, n, f, seed


def _emit_rows(rows: list[dict], out_dir: Path, fmt: str, stem: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        path.write_text(rows_to_csv(rows))
    else:
        path = out_dir / f"{stem}.jsonl"
        path.write_text(rows_to_json_lines(rows))
    return path


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_sim_config(Path(args.config).read_text())
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    result = run(cfg)
    summary = summarize(result)
    row = summary_row(
        summary,
        experiment="run",
        sweep_var="none",
        sweep_value=0,
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
        n=cfg.n,
        f=cfg.resolved_f(),
    )
    out_dir = Path(args.out_dir)
    metrics_path = _emit_rows([row], out_dir, args.format, "metrics")

    records_path = out_dir / "records.jsonl"
    with records_path.open("w") as fh:
        for tx_id in sorted(result.records):
            rec = result.records[tx_id]
            fh.write(
                json.dumps(
                    {
                        "tx_id": rec.tx_id.hex(),
                        "node": rec.node,
                        "submit_time": rec.submit_time,
                        "submit_round": rec.submit_round,
                        "fast_time": rec.fast_time,
                        "fast_round": rec.fast_round,
                        "fast_result": rec.fast_result.value if rec.fast_result else None,
                        "commit_time": rec.commit_time,
                        "commit_round": rec.commit_round,
                        "result": rec.result.value if rec.result else None,
                    }
                )
                + "\n"
            )
    messages_path = out_dir / "messages.log"
    with messages_path.open("w") as fh:
        for time, round_, author, pid in result.message_log:
            fh.write(f"{time:.6f} {round_} {author} {pid.hex()}\n")

    print(f"config_hash={cfg.config_hash()} seed={cfg.seed} hash={result.hash_name}")
    print(rows_to_table([row]))
    print(f"metrics: {metrics_path}")
    print(f"records: {records_path}")
    print(f"messages: {messages_path}")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    try:
        spec = load_experiment_spec(Path(args.spec).read_text())
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        spec.base = replace(spec.base, seed=args.seed)
    rows = run_experiment(spec)
    path = _emit_rows(rows, Path(args.out_dir), args.format, spec.name)
    seeds = sorted({row["seed"] for row in rows})
    print(f"experiment={spec.name} sweep={spec.sweep_var} seeds={seeds}")
    print(rows_to_table(rows))
    print(f"rows: {path}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    try:
        hb, n, f, seed = read_hyperblock_file(Path(args.hyperblock).read_bytes())
        proof = TxResultProof.from_bytes(Path(args.proof).read_bytes())
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    outcome = verify_tx_result(proof, hb, proof.tx_id, n, f, seed)
    if outcome is None:
        print("invalid", file=sys.stderr)
        return 1
    print("Success" if outcome is TxResult.SUCCESS else "Failed")
    return 0


def _cmd_export_dag(args: argparse.Namespace) -> int:
    try:
        cfg = load_sim_config(Path(args.config).read_text())
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    result = run(cfg)
    if not 0 <= args.node < cfg.n:
        print(f"error: node {args.node} out of range", file=sys.stderr)
        return 1
    edges = result.nodes[args.node].dag.export_edges()
    if args.out:
        Path(args.out).write_text(edges + "\n")
        print(f"edges: {args.out}")
    else:
        print(edges)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boardclerk")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out-dir", default="out")
    p_run.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    p_run.set_defaults(func=_cmd_run)

    p_exp = sub.add_parser("experiment", help="run an experiment sweep")
    p_exp.add_argument("--spec", required=True)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--out-dir", default="out")
    p_exp.add_argument("--format", choices=["csv", "json-lines"], default="csv")
    p_exp.set_defaults(func=_cmd_experiment)

    p_ver = sub.add_parser("verify", help="verify a transaction result proof")
    p_ver.add_argument("--hyperblock", required=True)
    p_ver.add_argument("--proof", required=True)
    p_ver.set_defaults(func=_cmd_verify)

    p_dag = sub.add_parser("export-dag", help="dump a node's DAG edge list")
    p_dag.add_argument("--config", required=True)
    p_dag.add_argument("--seed", type=int, default=None)
    p_dag.add_argument("--node", type=int, default=0)
    p_dag.add_argument("--out", default=None)
    p_dag.set_defaults(func=_cmd_export_dag)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
