#!/usr/bin/env python3
"""Plot mean SINR vs antenna count from results.csv (aggregate rows)."""
import csv
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

curves = defaultdict(list)
with open("results.csv", encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        if row["user"] == "all":
            curves[row["scheme"]].append((int(row["N"]),
                                          float(row["mean_sinr_db"])))

plt.figure(figsize=(7, 5))
for scheme in sorted(curves):
    pts = sorted(curves[scheme])
    plt.plot([p[0] for p in pts], [p[1] for p in pts],
             marker="o", label=scheme)
plt.xscale("log", base=2)
plt.xlabel("number of BS antennas")
plt.ylabel("mean SINR (dB)")
plt.grid(True, which="both", alpha=0.4)
plt.legend()
plt.tight_layout()
plt.savefig("sinr_vs_antennas.png", dpi=150)
print("wrote sinr_vs_antennas.png")
