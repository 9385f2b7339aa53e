"""Command line: run suites, browse the catalog, replay certificates.

Exit status 0 when every certificate passes, 1 when any quantity fails,
2 on a usage error (unknown suite, model or parameter).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import catalog, suites
from .certificates import emit_certificate, fmt, load_certificate
from .errors import CurvlabError, InputError, ReplayError

log = logging.getLogger("curvlab")

CONFIG_VERSION = 1

# quantities worth a line in summary.txt even when they pass
HEADLINE = {
    "core-curvature": ("max_bianchi_residual", "max_abs_sec_minus_1", "max_berger_oracle_gap", "max_abs_riemann"),
    "conformal-keylemma": ("conclusion1_min", "sec_min_at_p", "ricci_min"),
    "cheeger-estimates": ("fiber_length_gap", "centralizer_dim"),
    "singular-tubes": ("orphan_angle_max", "kappa_lower_min", "final_ratio"),
    "ricci-lift": ("chosen_lambda", "complement_ricci_min", "hypothesis_violation"),
    "almost-nonneg": ("chosen_lambda", "sec_min", "chosen_lambda_nonincreasing"),
    "exotic-op2": ("der_dim", "alpha", "beta_min"),
}


class UsageError(Exception):
    pass


def load_config(path):
    """Versioned JSON: {"version": 1, "suites": {suite: {param: value}}}."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if data.get("version") != CONFIG_VERSION:
        raise UsageError(f"config version {data.get('version')!r} is not {CONFIG_VERSION}")
    return data.get("suites", {})


def cert_stem(suite, model, part):
    return f"{suite}__{model}__{part}"


def _summary_lines(cert):
    status = "PASS" if cert.passed else "FAIL"
    lines = [f"{status} {cert.suite} {cert.model} part {cert.config['part']}"]
    keys = HEADLINE.get(cert.suite, ())
    for st in cert.stages:
        for q in st.quantities:
            if q.key.partition("@")[0] in keys or not q.passed:
                mark = "" if q.passed else "  <-- failed"
                lines.append(f"  {st.name}/{q.key} = {fmt(q.value)} (tol {fmt(q.tol)}){mark}")
    return lines


def run_suite(suite, models, out, seed=0, threads=None, tol_scale=1.0, overrides=None):
    """Run one suite over the given models; returns (certificates, written paths)."""
    if suite not in suites.SUITES:
        raise UsageError(f"unknown suite {suite!r}; known: {', '.join(suites.SUITES)}")
    models = list(models) or list(suites.MODELS[suite])
    try:
        params = suites.resolve_params(suite, overrides, tol_scale)
        requests = [suites.SuiteRequest(suite, m, params, seed, threads) for m in models]
        for req in requests:
            req.validate()
    except InputError as exc:
        raise UsageError(str(exc)) from None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    certs, paths, summary = [], [], []
    for req in requests:
        start = time.perf_counter()
        produced = suites.run(req)
        log.info("%s on %s: %d certificate(s) in %.1fs", suite, req.model, len(produced),
                 time.perf_counter() - start)
        for cert in produced:
            stem = out / cert_stem(suite, req.model, cert.config["part"])
            paths.append(emit_certificate(cert, stem.with_suffix(".json")))
            emit_certificate(cert, stem.with_suffix(".csv"), format="csv")
            summary += _summary_lines(cert)
        certs += produced
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return certs, paths


def replay(path, threads=None):
    """Recompute a stored certificate from its recorded configuration; True when the bytes agree."""
    path = Path(path)
    stored = load_certificate(path)
    cfg = stored.config
    try:
        req = suites.SuiteRequest(cfg["suite"], cfg["model_id"], cfg["params"], stored.seed, threads)
        part = int(cfg["part"])
    except (KeyError, TypeError):
        raise ReplayError(f"{path} does not record a replayable configuration") from None
    fresh = suites.run(req)
    if part >= len(fresh):
        raise ReplayError(f"{path} refers to part {part}, the run produced {len(fresh)}")
    return fresh[part].to_json().encode() == path.read_bytes()


def _parser():
    p = argparse.ArgumentParser(prog="curvlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a verification suite")
    r.add_argument("--suite", required=True)
    r.add_argument("--model", action="append", default=[], help="catalog id; repeatable (default: all for the suite)")
    r.add_argument("--out", default="curvlab-out")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int, default=None, help="default: $CURVLAB_THREADS, else logical cores")
    r.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tol_* parameter")
    r.add_argument("--config", help="versioned JSON of per-suite parameter overrides")

    sub.add_parser("list-models", help="list catalog ids")
    d = sub.add_parser("describe-model", help="declared and derived facts about a model")
    d.add_argument("model")
    d.add_argument("--json", action="store_true")

    rp = sub.add_parser("replay", help="recompute certificates and compare bytes")
    rp.add_argument("paths", nargs="+")
    rp.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "list-models":
            for mid in catalog.list_models():
                e = catalog.entry(mid)
                print(f"{mid:18s} {e['kind']:14s} {e['description']}")
            return 0
        if args.command == "describe-model":
            try:
                text = (json.dumps(catalog.describe(args.model), indent=1, default=str) if args.json
                        else catalog.describe_text(args.model))
            except InputError as exc:
                raise UsageError(str(exc)) from None
            print(text)
            return 0
        if args.command == "replay":
            bad = [p for p in args.paths if not replay(p, args.threads)]
            for p in bad:
                print(f"replay mismatch: {p}", file=sys.stderr)
            if not bad:
                print(f"{len(args.paths)} certificate(s) reproduced byte for byte")
            return 1 if bad else 0
        if args.tol_scale <= 0:
            raise UsageError("--tol-scale must be positive")
        overrides = load_config(args.config).get(args.suite) if args.config else None
        certs, _ = run_suite(args.suite, args.model, args.out, args.seed, args.threads, args.tol_scale, overrides)
    except UsageError as exc:
        print(f"curvlab: {exc}", file=sys.stderr)
        return 2
    except CurvlabError as exc:
        print(f"curvlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print((Path(args.out) / "summary.txt").read_text(), end="")
    failed = [(c, st, q) for c in certs for st, q in c.failures()]
    for c, st, q in failed:
        print(f"failed: {c.suite} {c.model} part {c.config['part']} {st}/{q.key} = {fmt(q.value)} "
              f"(tol {fmt(q.tol)})", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
