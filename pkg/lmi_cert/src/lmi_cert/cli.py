"""lmi-cert command line: certify an exchange document or sweep delays."""

from __future__ import annotations

import argparse
import json
import sys

from .certify import certify, certify_at, sweep_hbar, write_certificate
from .problem import SchemaError


def _load(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_certify(args) -> int:
    doc = _load(args.document)
    hbar = args.hbar if args.hbar is not None else int(doc.get("hbar", 0))
    if args.beta is not None:
        cert = certify_at(doc, hbar, args.variant, beta=args.beta)
    else:
        cert = certify(doc, hbar, args.variant)
    if args.out:
        write_certificate(args.out, cert)
    else:
        print(json.dumps(cert.to_doc(), indent=1))
    return 0 if cert.feasible else 1


def cmd_sweep(args) -> int:
    doc = _load(args.document)
    certs = sweep_hbar(doc, args.variant, args.hbar_max)
    rows = [c.to_doc() for c in certs]
    text = json.dumps(rows, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    feasible = [c.hbar for c in certs if c.feasible]
    if feasible:
        print(f"largest feasible hbar: {max(feasible)}", file=sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lmi-cert",
        description="delay-dependent LMI certification of compensated loops")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("certify", help="certify one exchange document")
    p.add_argument("document")
    p.add_argument("--variant", choices=["theorem4", "corollary2"],
                   default="corollary2")
    p.add_argument("--hbar", type=int, default=None,
                   help="override the document's hbar")
    p.add_argument("--beta", type=float, default=None,
                   help="verify this fixed level instead of minimizing")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify)

    p = subs.add_parser("sweep", help="certify hbar = 0..N")
    p.add_argument("document")
    p.add_argument("--variant", choices=["theorem4", "corollary2"],
                   default="corollary2")
    p.add_argument("--hbar-max", type=int, default=8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
