"""Command line: verified single jobs, a server, attack campaigns, the
overhead benchmark, and the per-layer-verified demo CNN.

Exit codes are stable across subcommands: 0 means accepted/success, 1 an
operational or usage error, 2 an integrity rejection (or a failed trend /
bypassed scheme in the analysis commands).
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import sys

from dataseal import adversary, backend as be, bench, demo, protocol as pr, ring
from dataseal.errors import DataSealError
from dataseal.ring import Matrix, ModulusConfig
from dataseal.sealcodec import ClientSecret

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2

DEFAULT_PORT = 5533
SECRET_ENV_DEFAULT = "DATASEAL_SECRET"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are operational errors (exit 1)
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} is not a positive integer")
    return value


def _size_list(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from exc
    if len(sizes) < 2 or list(sizes) != sorted(set(sizes)) or sizes[0] < 1:
        raise argparse.ArgumentTypeError("sizes must be >= 2 ascending positive integers")
    return sizes


def _host_port(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--modulus", type=_positive, default=ring.DEFAULT_MODULUS,
                   help="prime plaintext modulus (default %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="seed for reproducible runs")


def build_parser() -> _Parser:
    parser = _Parser(prog="dataseal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[], help="run one verified job")
    _add_common(run)
    run.add_argument("--op", choices=("mul", "add", "poly"), default="mul")
    run.add_argument("--n", type=_positive, default=4, help="square matrix size")
    run.add_argument("--exponent", type=int, default=2, help="exponent for poly jobs")
    run.add_argument("--slot-count", type=_positive, default=None)
    run.add_argument("--connect", type=_host_port, default=None, metavar="HOST:PORT",
                     help="use a remote server instead of the in-process one")
    run.add_argument("--tamper", choices=sorted(adversary.STRATEGY_NAMES), default=None,
                     help="inject a tamper at the (in-process) server")
    run.add_argument("--private-b", action="store_true",
                     help="encrypt the right factor too (ct x ct multiplication)")
    run.add_argument("--secret-env", default=SECRET_ENV_DEFAULT, metavar="VAR",
                     help="env var holding the client secret as 32 hex chars")
    run.add_argument("--secret-file", default=None, help="file holding the raw 16-byte secret")

    serve = sub.add_parser("serve", help="serve the evaluation protocol over TCP")
    _add_common(serve)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve.add_argument("--slot-count", type=_positive, default=be.DEFAULT_SLOT_COUNT)
    serve.add_argument("--max-depth", type=_positive, default=be.DEFAULT_MAX_DEPTH)

    attack = sub.add_parser("attack", help="run tamper campaigns and the forgery game")
    _add_common(attack)
    attack.add_argument("--trials", type=_positive, default=100, help="trials per campaign cell")
    attack.add_argument("--sizes", type=_size_list, default=(2, 4, 8))
    attack.add_argument("--scheme", choices=("dataseal", "abft", "both"), default="both")
    attack.add_argument("--strategy", choices=("all", *sorted(adversary.STRATEGY_NAMES)),
                        default="all")
    attack.add_argument("--forgery-trials", type=_positive, default=1000)
    attack.add_argument("--csv", default=None, help="write per-cell stats as CSV")
    attack.add_argument("--bypass-demo", action="store_true",
                        help="print the column-sum bypass replay transcript")

    bench_p = sub.add_parser("bench", help="measure encode/evaluate/verify scaling")
    _add_common(bench_p)
    bench_p.add_argument("--sizes", type=_size_list, default=(8, 16, 32, 64))
    bench_p.add_argument("--reps", type=_positive, default=bench.MIN_REPS)
    bench_p.add_argument("--csv", default=None, help="write phase medians as CSV")

    demo_p = sub.add_parser("demo-cnn", help="per-layer verified demo CNN")
    _add_common(demo_p)
    demo_p.add_argument("--tamper-layer", type=int, default=None, metavar="K",
                        help="tamper the K-th layer's result (1-based)")
    demo_p.add_argument("--overlap", action="store_true",
                        help="submit the next layer before verifying the current one")
    return parser


def _load_secret(args, rng: random.Random) -> ClientSecret:
    env_name = getattr(args, "secret_env", SECRET_ENV_DEFAULT)
    if env_name and os.environ.get(env_name):
        return ClientSecret.from_hex(os.environ[env_name])
    path = getattr(args, "secret_file", None)
    if path:
        with open(path, "rb") as fh:
            return ClientSecret(fh.read())
    return ClientSecret(rng.randbytes(16))


def cmd_run(args) -> int:
    rng = random.Random(args.seed)
    mod = ModulusConfig(args.modulus)
    n = args.n
    slot_count = args.slot_count or max(be.DEFAULT_SLOT_COUNT, 1 << (n - 1).bit_length())
    params = be.BackendParams(modulus=mod, slot_count=slot_count)

    a = Matrix.random(n, n, mod, rng, nonzero=(args.op == "poly"))
    b = Matrix.random(n, n, mod, rng) if args.op != "poly" else None

    if args.connect is not None:
        if args.tamper:
            print("--tamper needs the in-process server", file=sys.stderr)
            return EXIT_ERROR
        ctx = be.keygen(params)
        transport = pr.SocketTransport(args.connect[0], args.connect[1], ctx)
    else:
        ctx = be.keygen(params)
        interceptor = None
        if args.tamper:
            strategy = adversary.STRATEGY_NAMES[args.tamper]()
            box = adversary._TamperBox(adversary.SCHEME_DATASEAL, mod.m)
            box.strategy, box.rng = strategy, rng
            interceptor = box.interceptor
        transport = pr.InProcessTransport(pr.ServerCore(ctx, result_interceptor=interceptor))

    session = pr.ClientSession(_load_secret(args, rng), ctx, session_id=rng.randbytes(8))
    job_id = session.submit(transport, args.op, a, b,
                            exponent=args.exponent if args.op == "poly" else 0,
                            private_b=args.private_b)
    result, verdict = session.collect(job_id)
    print(f"job {job_id} op={args.op} n={n}: {verdict}")
    shown = min(result.rows, 4)
    for i in range(shown):
        print(f"  C[{i}] = {result.row(i)}")
    if result.rows > shown:
        print(f"  ... {result.rows - shown} more rows")
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def cmd_serve(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    mod = ModulusConfig(args.modulus)
    params = be.BackendParams(modulus=mod, slot_count=args.slot_count, max_depth=args.max_depth)
    try:
        server = pr.FrameServer(args.host, args.port, pr.ServerCore(be.keygen(params)))
    except OSError as exc:
        print(f"bind {args.host}:{args.port} failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"serving on {args.host}:{server.port} "
          f"(m={mod.m}, slots={args.slot_count}, depth={args.max_depth})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return EXIT_OK


def _print_campaign(stats: adversary.DetectionStats) -> None:
    print(f"scheme={stats.scheme}")
    print(f"  {'strategy':<12} {'op':<5} {'size':>4} {'trials':>7} {'detect':>7} {'false-acc':>9}")
    for row in stats.rows():
        print(f"  {row['strategy']:<12} {row['op']:<5} {row['size']:>4} "
              f"{row['trials']:>7} {row['detections']:>7} {row['false_accepts']:>9}")


def cmd_attack(args) -> int:
    if args.bypass_demo:
        replay = adversary.column_sum_bypass_replay()
        print(replay.transcript())
        ok = replay.baseline_verdict.accepted and not replay.keyed_verdict.accepted
        return EXIT_OK if ok else EXIT_REJECT

    if args.strategy == "all":
        strategies = adversary.default_strategies()
    else:
        strategies = (adversary.STRATEGY_NAMES[args.strategy](),)
    schemes = ("dataseal", "abft") if args.scheme == "both" else (args.scheme,)

    all_rows = []
    dataseal_bypassed = False
    for scheme in schemes:
        cfg = adversary.CampaignConfig(
            trials=args.trials, sizes=args.sizes, modulus=args.modulus,
            scheme=scheme, seed=args.seed, strategies=strategies,
        )
        stats = adversary.run_campaign(cfg)
        _print_campaign(stats)
        all_rows.extend(stats.rows())
        if scheme == adversary.SCHEME_DATASEAL:
            for strategy in strategies:
                if isinstance(strategy, adversary.Passthrough):
                    continue
                if stats.totals(strategy.name).false_accepts:
                    dataseal_bypassed = True

    game = adversary.forgery_game(args.forgery_trials, modulus=args.modulus, cols=4,
                                  seed=args.seed)
    print(f"forgery game: {game.wins}/{game.trials} keyless wins "
          f"(bound per play: m**-cols = {args.modulus}**-4)")

    if args.csv:
        import csv as _csv

        with open(args.csv, "w", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=adversary.CSV_FIELDS)
            writer.writeheader()
            writer.writerows(all_rows)
        print(f"wrote {args.csv}")

    if dataseal_bypassed or game.wins:
        print("INTEGRITY FAILURE: keyed scheme accepted a forgery", file=sys.stderr)
        return EXIT_REJECT
    return EXIT_OK


def cmd_bench(args) -> int:
    records = bench.run_bench(args.sizes, reps=args.reps, modulus=args.modulus, seed=args.seed)
    print(f"{'op':<5} {'n':>4} {'phase':<9} {'median_s':>12} {'space':>8}")
    for rec in records:
        print(f"{rec.op:<5} {rec.n:>4} {rec.phase:<9} {rec.median_seconds:>12.6f} "
              f"{str(rec.space_overhead):>8}")
    report = bench.check_trend(records)
    print(report.summary())
    if args.csv:
        bench.write_bench_csv(records, args.csv)
        print(f"wrote {args.csv}")
    return EXIT_OK if report.passed else EXIT_REJECT


def cmd_demo_cnn(args) -> int:
    spec = demo.DemoCnnSpec(seed=args.seed, modulus=args.modulus)
    if args.tamper_layer is not None and not 1 <= args.tamper_layer <= spec.layer_count:
        print(f"--tamper-layer must be in [1, {spec.layer_count}]", file=sys.stderr)
        return EXIT_ERROR
    report = demo.run_demo(spec, tamper_layer=args.tamper_layer, overlap=args.overlap)
    print(report.summary(spec.layer_count))
    if report.rejected_layer is not None:
        return EXIT_REJECT
    if not report.matches_reference:
        print("output disagrees with the plaintext reference", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "serve": cmd_serve,
    "attack": cmd_attack,
    "bench": cmd_bench,
    "demo-cnn": cmd_demo_cnn,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DataSealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
