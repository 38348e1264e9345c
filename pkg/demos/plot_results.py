"""Plot the CSVs written by walkthrough.sh.  Needs matplotlib, which the
package itself does not depend on."""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_learning(out: Path):
    per_bss = defaultdict(lambda: ([], [], []))
    for r in rows(out / "learning_trace.csv"):
        it, pw, thr = per_bss[r["bss_id"]]
        it.append(int(r["iter"]))
        pw.append(float(r["power_dbm"]))
        thr.append(float(r["thr_mbps"]))
    fig, (a, b) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for bss, (it, pw, thr) in sorted(per_bss.items()):
        a.step(it, pw, where="post", label=f"BSS {bss}")
        b.plot(it, thr, lw=0.8, label=f"BSS {bss}")
    a.set_ylabel("tx power (dBm)")
    b.set_ylabel("throughput (Mbps)")
    b.set_xlabel("iteration")
    a.legend()
    fig.tight_layout()
    fig.savefig(out / "learning.png", dpi=120)


def plot_sweep(out: Path):
    data = rows(out / "sweep.csv")
    d = [float(r["duration_s"]) for r in data]
    fig, a = plt.subplots(figsize=(6, 4))
    a.plot(d, [float(r["cov"]) for r in data], "o-", color="tab:blue")
    a.set_xscale("log")
    a.set_xlabel("simulated duration (s)")
    a.set_ylabel("CoV of aggregate throughput", color="tab:blue")
    t = a.twinx()
    t.plot(d, [float(r["mean_exec_ms"]) for r in data], "s--", color="tab:red")
    t.set_ylabel("wall clock per run (ms)", color="tab:red")
    fig.tight_layout()
    fig.savefig(out / "sweep.png", dpi=120)


def plot_oracle(out: Path):
    data = rows(out / "oracle.csv")
    fig, a = plt.subplots(figsize=(8, 4))
    a.bar(range(len(data)), [float(r["mean_aggregate_mbps"]) for r in data])
    a.set_xticks(range(len(data)), [r["powers"] for r in data], rotation=90, fontsize=7)
    a.set_ylabel("aggregate throughput (Mbps)")
    fig.tight_layout()
    fig.savefig(out / "oracle.png", dpi=120)


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    for fn in (plot_learning, plot_sweep, plot_oracle):
        fn(out)
    print(f"plots written to {out}")
