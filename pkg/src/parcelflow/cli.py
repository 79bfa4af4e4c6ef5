"""Command-line entry point: ``parcelflow <subcommand> ...``.

Exit codes: 0 success, 1 domain/runtime error, 2 usage error.
Machine output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import urllib.error
import urllib.request
from dataclasses import replace
from urllib.parse import quote

from . import codec
from .core import validate_label
from .engine import load_scenario, run
from .errors import ParcelFlowError
from .metrics import (
    ConfusionMatrix,
    classification_report,
    from_pairs,
    read_pairs_csv,
    reconstruct_matrix,
    render_report,
)
from .service import ParcelService, make_server
from .sorter import SortBasis
from .tracking import TrackingStore

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


def _dims(text):
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError("dims must look like LxWxH") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must look like LxWxH")
    return parts


def build_parser():
    p = argparse.ArgumentParser(prog="parcelflow", description="Parcel scan-and-sort simulator and tracking tools.")
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode label fields into a payload")
    enc.add_argument("--id", required=True)
    enc.add_argument("--weight-g", type=int, required=True)
    enc.add_argument("--dims", type=_dims, required=True, metavar="LxWxH")
    enc.add_argument("--zone", required=True)
    enc.add_argument("--nature", choices=["METALLIC", "NONMETALLIC"], default="NONMETALLIC")
    enc.add_argument("--fragility", choices=["FRAGILE", "REGULAR"], default="REGULAR")
    enc.add_argument("--address", default="")

    dec = sub.add_parser("decode", help="decode a payload into label JSON")
    dec.add_argument("payload")

    sim = sub.add_parser("simulate", help="run a scenario and write the JSONL event log")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", required=True)
    sim.add_argument("--basis", choices=["weight", "dims", "zone"])

    rep = sub.add_parser("report", help="classification report from pairs or a matrix")
    src = rep.add_mutually_exclusive_group(required=True)
    src.add_argument("--pairs", help="CSV with header truth,predicted")
    src.add_argument("--matrix", help="JSON {classes, counts}")
    rep.add_argument("--format", choices=["text", "json"], default="text")

    rec = sub.add_parser("reconstruct-matrix", help="recover a confusion matrix from a rounded report")
    rec.add_argument("--report", required=True)

    srv = sub.add_parser("serve", help="serve the HTTP API")
    srv.add_argument("--port", type=int, default=8080)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--log", required=True, help="tracking event log (JSONL)")
    srv.add_argument("--sim-log", help="simulation event log to expose via /report and /bins")

    trk = sub.add_parser("track", help="query a parcel's tracking state from a running server")
    trk.add_argument("--url", required=True)
    trk.add_argument("id")
    return p


def _print_json(obj):
    sys.stdout.write(json.dumps(obj, ensure_ascii=False) + "\n")


def cmd_encode(a):
    label = validate_label({
        "id": a.id, "weight_g": a.weight_g, "dims_mm": a.dims, "zone": a.zone,
        "nature": a.nature, "fragility": a.fragility, "address": a.address,
    })
    sys.stdout.write(codec.encode(label) + "\n")


def cmd_decode(a):
    _print_json(codec.decode(a.payload).to_dict())


def cmd_simulate(a):
    scenario = load_scenario(a.scenario)
    overrides = {}
    if a.seed is not None:
        overrides["seed"] = a.seed
    if a.basis is not None:
        overrides["sort_basis"] = SortBasis.parse(a.basis)
    if overrides:
        scenario = replace(scenario, **overrides).check()
    report = run(scenario)
    with open(a.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_jsonl())
    _print_json(report.totals())


def cmd_report(a):
    if a.pairs:
        with open(a.pairs, newline="", encoding="utf-8") as fh:
            matrix = from_pairs(read_pairs_csv(fh))
    else:
        with open(a.matrix, encoding="utf-8") as fh:
            matrix = ConfusionMatrix.from_dict(json.load(fh))
    report = classification_report(matrix)
    if a.format == "json":
        _print_json(report.to_dict(rounded=True))
    else:
        sys.stdout.write(render_report(report))


def cmd_reconstruct(a):
    with open(a.report, encoding="utf-8") as fh:
        doc = json.load(fh)
    result = reconstruct_matrix(doc, allow_ambiguous=True)
    _print_json(result.to_dict())
    if not result.unique:
        print(f"AMBIGUOUS: {len(result.solutions)} diagonal/margin solutions", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_serve(a):
    store = TrackingStore.open(a.log)
    service = ParcelService.with_sim_log(store, a.sim_log) if a.sim_log else ParcelService(store)
    server = make_server(service, a.host, a.port)
    print(f"serving on http://{a.host}:{server.server_address[1]}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_track(a):
    url = f"{a.url.rstrip('/')}/api/v1/parcels/{quote(a.id, safe='')}/track"
    try:
        with urllib.request.urlopen(url, timeout=10) as resp:
            body = json.load(resp)
    except urllib.error.HTTPError as exc:
        err = json.load(exc)
        print(f"{err.get('code', exc.code)}: {err.get('message', '')}", file=sys.stderr)
        return EXIT_ERROR
    except urllib.error.URLError as exc:
        print(f"CONNECTION: {exc.reason}", file=sys.stderr)
        return EXIT_ERROR
    _print_json(body)


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "reconstruct-matrix": cmd_reconstruct,
    "serve": cmd_serve,
    "track": cmd_track,
}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except ParcelFlowError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
