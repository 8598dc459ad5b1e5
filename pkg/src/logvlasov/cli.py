"""Command line: ``run <config>``, ``replay <manifest>``, ``check <manifest>``.

Exit status is 0 when every acceptance verdict passes, 1 when one fails and
2 for usage errors.  ``LOGVLASOV_OUTPUT_DIR`` overrides the output directory.
"""
import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .config import parse_config, render_config
from .errors import ConfigError

OUTPUT_ENV = "LOGVLASOV_OUTPUT_DIR"
DEFAULT_OUTPUT = "logvlasov-runs"
CSV_SCHEMA = 1


class UsageError(Exception):
    pass


def run_id(cfg):
    # thread count is not part of the result
    return hashlib.sha256(render_config(cfg, include_threads=False).encode()).hexdigest()[:16]


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _cell(x):
    if isinstance(x, float):
        return format(x, ".17g")
    if hasattr(x, "item"):
        return _cell(x.item())
    return str(x)


def write_table(path, table):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(",".join(_cell(c) for c in row) + "\n")


def output_dir(default=None):
    return os.environ.get(OUTPUT_ENV) or default or DEFAULT_OUTPUT


def set_threads(n):
    import numba

    if n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def execute(cfg, out_dir):
    """Run ``cfg``, write its CSVs and manifest into ``out_dir``; return the manifest dict."""
    from .experiments import RUNNERS

    set_threads(cfg.threads)
    rid = run_id(cfg)
    os.makedirs(out_dir, exist_ok=True)
    start = time.perf_counter()
    outcome = RUNNERS[cfg.experiment](cfg)
    wall = time.perf_counter() - start
    outputs = []
    for name, table in outcome.tables.items():
        fname = f"{cfg.experiment}_{name}_{rid}.csv"
        path = os.path.join(out_dir, fname)
        write_table(path, table)
        outputs.append({"file": fname, "sha256": sha256_file(path), "schema": CSV_SCHEMA})
    manifest = {
        "run_id": rid,
        "config": render_config(cfg),
        "version": __version__,
        "wall_time_s": round(wall, 3),
        "experiment": cfg.experiment,
        "outputs": outputs,
        "verdicts": {k: bool(v) for k, v in outcome.verdicts.items()},
        "pass": bool(outcome.passed),
    }
    with open(os.path.join(out_dir, f"manifest_{rid}.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path):
    try:
        with open(path) as fh:
            m = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from None
    for key in ("run_id", "config", "outputs", "verdicts"):
        if key not in m:
            raise UsageError(f"manifest {path} lacks '{key}'")
    return m


def check_manifest(path):
    """List of problems with a manifest's outputs; empty when all is well."""
    m = load_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    for out in m["outputs"]:
        f = os.path.join(base, out["file"])
        if m["run_id"] not in out["file"]:
            problems.append(f"{out['file']}: does not carry run id {m['run_id']}")
        if not os.path.exists(f):
            problems.append(f"{out['file']}: missing")
        elif sha256_file(f) != out["sha256"]:
            problems.append(f"{out['file']}: checksum mismatch")
    for name, ok in m["verdicts"].items():
        if not ok:
            problems.append(f"verdict {name}: fail")
    return problems


def _report(manifest, stream=sys.stdout):
    print(f"run {manifest['run_id']} ({manifest['experiment']}) in {manifest['wall_time_s']} s", file=stream)
    for name, ok in manifest["verdicts"].items():
        print(f"  {'PASS' if ok else 'FAIL'}  {name}", file=stream)


def cmd_run(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    cfg = parse_config(text)
    m = execute(cfg, output_dir(args.out))
    _report(m)
    return 0 if m["pass"] else 1


def cmd_replay(args):
    old = load_manifest(args.manifest)
    cfg = parse_config(old["config"])
    out = output_dir(args.out or os.path.dirname(os.path.abspath(args.manifest)))
    new = execute(cfg, out)
    _report(new)
    before = {o["file"]: o["sha256"] for o in old["outputs"]}
    after = {o["file"]: o["sha256"] for o in new["outputs"]}
    same = before == after
    print("outputs identical" if same else "outputs differ")
    return 0 if same and new["pass"] else 1


def cmd_check(args):
    problems = check_manifest(args.manifest)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 0 if not problems else 1


def build_parser():
    p = argparse.ArgumentParser(prog="logvlasov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--out", help=f"output directory (overridden by ${OUTPUT_ENV})")
    r.set_defaults(func=cmd_run)
    rp = sub.add_parser("replay", help="re-run a manifest's config and compare outputs")
    rp.add_argument("manifest")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_replay)
    c = sub.add_parser("check", help="verify a manifest's outputs and verdicts")
    c.add_argument("manifest")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
