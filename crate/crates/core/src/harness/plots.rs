//! Matplotlib companions for the sweep CSVs. Each script is self-contained,
//! reads only its CSV (path as first argument, sibling file by default),
//! and drops a PNG next to it — regenerating a figure never requires
//! rerunning an experiment.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) fn write_script(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub(crate) const RETURN_COMPARISON: &str = r##"#!/usr/bin/env python3
"""Per-episode returns of the learned, optimal, and random schemes.

Reads return_comparison.csv (episode, policy_return, optimal_return,
random_return, normalized_policy, normalized_random).
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "return_comparison.csv")
episodes, policy, optimal, random_ = [], [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        episodes.append(int(row["episode"]))
        policy.append(float(row["policy_return"]))
        optimal.append(float(row["optimal_return"]))
        random_.append(float(row["random_return"]))

fig, ax = plt.subplots(figsize=(8, 4.5))
ax.plot(episodes, optimal, label="optimal", linewidth=1.0)
ax.plot(episodes, policy, label="learned", linewidth=1.0)
ax.plot(episodes, random_, label="random", linewidth=1.0)
ax.set_xlabel("test episode")
ax.set_ylabel("episode return (bit/s)")
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const PER_LINK_RATES: &str = r##"#!/usr/bin/env python3
"""Per-step rate of each D2D link under the learned policy.

Reads per_link_rates.csv (episode, step, link, rate_bps) and plots the
first episode's trace, one line per link.
"""
import csv
import os
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "per_link_rates.csv")
traces = defaultdict(list)
with open(path) as fh:
    for row in csv.DictReader(fh):
        if int(row["episode"]) != 0:
            continue
        traces[int(row["link"])].append((int(row["step"]), float(row["rate_bps"])))

fig, ax = plt.subplots(figsize=(8, 4.5))
for link in sorted(traces):
    points = sorted(traces[link])
    ax.plot([s for s, _ in points], [r for _, r in points],
            label="link %d" % link, linewidth=1.0)
ax.set_xlabel("step")
ax.set_ylabel("rate (bit/s)")
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const ARP_VS_FEEDBACK_COUNT: &str = r##"#!/usr/bin/env python3
"""ARP as a function of the number of real feedback values per link.

Reads arp_vs_feedback_count.csv (feedback_count, arp, random_arp).
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "arp_vs_feedback_count.csv")
counts, arp, random_arp = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        counts.append(int(row["feedback_count"]))
        arp.append(float(row["arp"]))
        random_arp.append(float(row["random_arp"]))

fig, ax = plt.subplots(figsize=(6.5, 4.5))
ax.plot(counts, arp, marker="o", label="learned")
ax.plot(counts, random_arp, marker="s", linestyle="--", label="random")
ax.set_xlabel("real feedback values per link")
ax.set_ylabel("average return percentage (%)")
ax.set_ylim(0, 105)
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const ARP_VS_FEEDBACK_BITS: &str = r##"#!/usr/bin/env python3
"""ARP as a function of the per-link feedback bit budget (binary mode).

Reads arp_vs_feedback_bits.csv (total_feedback_bits, arp, random_arp).
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "arp_vs_feedback_bits.csv")
bits, arp, random_arp = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        bits.append(int(row["total_feedback_bits"]))
        arp.append(float(row["arp"]))
        random_arp.append(float(row["random_arp"]))

fig, ax = plt.subplots(figsize=(6.5, 4.5))
ax.plot(bits, arp, marker="o", label="learned (binary feedback)")
ax.plot(bits, random_arp, marker="s", linestyle="--", label="random")
ax.set_xlabel("feedback bits per link")
ax.set_ylabel("average return percentage (%)")
ax.set_ylim(0, 105)
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const SEED_STUDY: &str = r##"#!/usr/bin/env python3
"""ARP across independent training seeds.

Reads seed_study.csv (train_seed, arp, random_arp).
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "seed_study.csv")
seeds, arp, random_arp = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        seeds.append(row["train_seed"])
        arp.append(float(row["arp"]))
        random_arp.append(float(row["random_arp"]))

fig, ax = plt.subplots(figsize=(6.5, 4.5))
positions = range(len(seeds))
ax.bar(positions, arp, width=0.6, label="learned")
ax.plot(positions, random_arp, marker="s", linestyle="--",
        color="tab:orange", label="random")
ax.set_xticks(list(positions))
ax.set_xticklabels(seeds)
ax.set_xlabel("training seed")
ax.set_ylabel("average return percentage (%)")
ax.set_ylim(0, 105)
ax.grid(alpha=0.3, axis="y")
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const FEEDBACK_INTERVAL: &str = r##"#!/usr/bin/env python3
"""Return under stale feedback, normalized by the every-step policy.

Reads feedback_interval.csv (feedback_interval, mean_return,
normalized_return, arp).
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "feedback_interval.csv")
intervals, normalized = [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        intervals.append(int(row["feedback_interval"]))
        normalized.append(float(row["normalized_return"]))

fig, ax = plt.subplots(figsize=(6.5, 4.5))
ax.plot(intervals, normalized, marker="o")
ax.set_xscale("log")
ax.set_xlabel("feedback interval (steps)")
ax.set_ylabel("return normalized by every-step feedback")
ax.grid(alpha=0.3, which="both")
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const INPUT_NOISE: &str = r##"#!/usr/bin/env python3
"""ARP as observation noise rises.

Reads input_noise.csv (input_noise_db, arp, random_arp); the first row's
"off" means no noise.
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "input_noise.csv")
labels, arp, random_arp = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        labels.append(row["input_noise_db"])
        arp.append(float(row["arp"]))
        random_arp.append(float(row["random_arp"]))

fig, ax = plt.subplots(figsize=(6.5, 4.5))
positions = range(len(labels))
ax.plot(positions, arp, marker="o", label="learned")
ax.plot(positions, random_arp, marker="s", linestyle="--", label="random")
ax.set_xticks(list(positions))
ax.set_xticklabels(labels)
ax.set_xlabel("observation noise power ratio (dB)")
ax.set_ylabel("average return percentage (%)")
ax.set_ylim(0, 105)
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;

pub(crate) const FEEDBACK_NOISE: &str = r##"#!/usr/bin/env python3
"""ARP as feedback-channel noise rises.

Reads feedback_noise.csv (feedback_noise_db, arp, random_arp); the first
row's "off" means no noise.
"""
import csv
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "feedback_noise.csv")
labels, arp, random_arp = [], [], []
with open(path) as fh:
    for row in csv.DictReader(fh):
        labels.append(row["feedback_noise_db"])
        arp.append(float(row["arp"]))
        random_arp.append(float(row["random_arp"]))

fig, ax = plt.subplots(figsize=(6.5, 4.5))
positions = range(len(labels))
ax.plot(positions, arp, marker="o", label="learned")
ax.plot(positions, random_arp, marker="s", linestyle="--", label="random")
ax.set_xticks(list(positions))
ax.set_xticklabels(labels)
ax.set_xlabel("feedback noise power ratio (dB)")
ax.set_ylabel("average return percentage (%)")
ax.set_ylim(0, 105)
ax.grid(alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.splitext(path)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"##;
