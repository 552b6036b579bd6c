"""Plot CLI report CSVs. Needs the optional ``plot`` extra (matplotlib).

Usage::

    python3 scripts/plot_reports.py gic gic.csv --out gic.png
    python3 scripts/plot_reports.py pvalues tests.csv --out pv.png
    python3 scripts/plot_reports.py bic select.csv --out bic.png
"""

import argparse
import csv
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_report(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    prov = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
    body = lines[1:] if prov else lines
    return prov, list(csv.DictReader(body))


def plot_gic(rows, ax):
    by_node = {}
    for r in rows:
        by_node.setdefault(int(r["node"]), []).append((float(r["eta"]), float(r["gic"])))
    for j, pts in sorted(by_node.items()):
        eta, gic = np.array(sorted(pts)).T
        ax.plot(eta, gic, lw=0.8, label=str(j) if len(by_node) <= 10 else None)
    ax.set_xscale("log")
    ax.set_xlabel("eta")
    ax.set_ylabel("GIC")
    if len(by_node) <= 10:
        ax.legend(title="node", fontsize="small")


def plot_pvalues(rows, ax):
    pv = np.sort([float(r["p_value"]) for r in rows])
    ax.plot(np.arange(1, pv.size + 1) / pv.size, pv, ".", ms=3)
    ax.plot([0, 1], [0, 1], "k--", lw=0.8)
    ax.set_xlabel("uniform quantile")
    ax.set_ylabel("p-value")


def plot_bic(rows, ax):
    m0 = sorted({int(r["m0"]) for r in rows})
    m1 = sorted({int(r["m1"]) for r in rows})
    grid = np.full((len(m0), len(m1)), np.nan)
    for r in rows:
        grid[m0.index(int(r["m0"])), m1.index(int(r["m1"]))] = float(r["bic"])
    im = ax.imshow(grid, origin="lower", aspect="auto")
    ax.set_xticks(range(len(m1)), m1)
    ax.set_yticks(range(len(m0)), m0)
    ax.set_xlabel("m1")
    ax.set_ylabel("m0")
    ax.figure.colorbar(im, ax=ax, label="BIC")


PLOTS = {"gic": plot_gic, "pvalues": plot_pvalues, "bic": plot_bic}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=sorted(PLOTS))
    ap.add_argument("csv")
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    _, rows = read_report(args.csv)
    fig, ax = plt.subplots(figsize=(6, 4))
    PLOTS[args.kind](rows, ax)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
