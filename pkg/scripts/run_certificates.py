#!/usr/bin/env python3
"""Tabulate the confidence bounds over a grid of sample sizes."""

import argparse
from pathlib import Path

from scengame.certificates import (
    CertificateQuery,
    certificate_report,
    min_samples,
)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/certificates.csv"))
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--eps-tilde", type=float, default=0.5)
    ap.add_argument("--bound", type=float, default=3.0)
    ap.add_argument("--players", type=int, default=2)
    ap.add_argument("--dim", type=int, default=10)
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[100, 300, 1000, 3000, 10000])
    args = ap.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)

    with open(args.out, "w") as fh:
        fh.write("S,exp_term,tail_term,delta_prop1\n")
        for S in args.sizes:
            q = CertificateQuery(
                sample_size=S,
                failure_prob=args.eps,
                objective_tol=args.eps_tilde,
                objective_bound=args.bound,
                num_players=args.players,
                decision_dim=args.dim,
            )
            r = certificate_report(q)
            fh.write(
                f"{S},{r['exp_term']!r},{r['tail_term']!r},{r['delta_prop1']!r}\n"
            )
            print(f"S={S}: delta={r['delta_prop1']:.3e}")

    template = CertificateQuery(
        sample_size=1,
        failure_prob=args.eps,
        objective_tol=args.eps_tilde,
        objective_bound=args.bound,
        num_players=args.players,
        decision_dim=args.dim,
    )
    for target in (0.1, 0.01, 0.001):
        print(f"smallest S with delta <= {target}: {min_samples(target, template)}")


if __name__ == "__main__":
    main()
