"""Regenerates the test fixtures and their oracle values.

Oracle numbers come from scipy and a plain-Python LCS, so they are
independent of the Rust implementation. Run from the repository root:

    python3 fixtures/make_fixtures.py
"""

import json
import os
import re
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import stats

ROOT = Path(__file__).resolve().parent
rng = np.random.default_rng(20240117)


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def images():
    out = ROOT / "images"
    out.mkdir(exist_ok=True)
    for i in range(10):
        arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        Image.fromarray(arr, "RGB").save(out / f"img{i:02d}.png", optimize=False)


LEVELS = [
    "The response ignores the criterion entirely.",
    "The response touches the criterion but gets most of it wrong.",
    "The response addresses the criterion with noticeable gaps.",
    "The response addresses the criterion well with minor slips.",
    "The response fully satisfies the criterion.",
]


def rubric(criteria, kind, levels=LEVELS):
    return {
        "criteria": criteria,
        "score_descriptions": {str(i + 1): t for i, t in enumerate(levels)},
        "keywords": [],
        "kind": kind,
    }


GENERAL = [
    "Does the response accurately describe the main objects visible in the image?",
    "Is the response free of claims about things that are not shown in the picture?",
    "Does the response explain spatial relations between the depicted items correctly?",
    "Does the response answer the question with an appropriate level of detail?",
    "Is the response organized so a reader can follow the reasoning step by step?",
]
DOMAIN = [
    "Does the response read the chart axes and units correctly?",
    "Does the response identify the artistic style and period of the painting?",
    "Does the response interpret the medical scan findings with suitable caution?",
    "Does the response transcribe the handwritten text in the photo faithfully?",
    "Does the response identify the plant species from leaf and flower shape?",
]


def seeds():
    write_jsonl(ROOT / "seeds" / "general.jsonl", [rubric(c, "general_purpose") for c in GENERAL])
    write_jsonl(ROOT / "seeds" / "domain.jsonl", [rubric(c, "domain_specific") for c in DOMAIN])


BENCHES = ["llava-bench", "visit-bench", "perception-bench"]
TOPICS = [
    "counting the fruit on the table", "reading the street sign", "describing the weather",
    "naming the animal species", "explaining the joke in the meme", "estimating the crowd size",
    "identifying the sport being played", "describing the kitchen layout", "reading the clock",
    "explaining the diagram", "describing the clothing colors", "identifying the landmark",
    "reading the menu prices", "describing the facial expression", "explaining the traffic situation",
]


def bench45():
    """45 instances, three annotators each, one judge run with three repeats."""
    instances, responses, humans, judgments = [], [], [], []
    latent = rng.integers(1, 6, size=45)
    for b, bench in enumerate(BENCHES):
        for t, topic in enumerate(TOPICS):
            k = b * 15 + t
            iid = f"{bench}-{t:02d}"
            instances.append({
                "id": iid,
                "image": {"path": f"../images/img{k % 10:02d}.png"},
                "instruction": f"Look at the image and help with {topic}.",
                "reference_answer": f"A complete answer about {topic} that names every visible detail.",
                "rubric": rubric(f"Does the response handle {topic} accurately and completely?", "general_purpose"),
                "benchmark_tag": bench,
            })
            words = " ".join(["detail"] * int(rng.integers(10, 40)))
            responses.append({
                "instance_id": iid,
                "responder_id": "llava-1.5-13b",
                "text": f"The image shows {topic}. {words}.",
            })
            base = int(latent[k])
            group = ["ann-a", "ann-b", "ann-c"] if b == 0 else (["ann-d", "ann-e", "ann-f"] if b == 1 else ["ann-g", "ann-h", "ann-i"])
            for a in group:
                s = int(np.clip(base + rng.integers(-1, 2), 1, 5))
                humans.append({"instance_id": iid, "annotator_id": a, "score": s})
            for r in range(3):
                s = int(np.clip(base + rng.integers(-1, 2) * (rng.random() < 0.5), 1, 5))
                fb = f"The response covers {topic} at the level the rubric describes."
                judgments.append({
                    "instance_id": iid,
                    "responder_id": "llava-1.5-13b",
                    "judge_id": "prometheus-vision-13b",
                    "repeat_index": r,
                    "feedback": fb,
                    "score": s,
                    "raw_output": f"Feedback: {fb} [RESULT] {s}",
                    "status": "ok",
                    "extraction_rule": "result_marker",
                })
    d = ROOT / "bench45"
    write_jsonl(d / "instances.jsonl", instances)
    write_jsonl(d / "responses.jsonl", responses)
    write_jsonl(d / "human_scores.jsonl", humans)
    write_jsonl(d / "judgments.jsonl", judgments)

    def means(rows, key):
        acc = {}
        for r in rows:
            acc.setdefault(r["instance_id"], []).append(r[key])
        return {k: float(np.mean(v)) for k, v in acc.items()}

    h, j = means(humans, "score"), means(judgments, "score")
    bench_of = {i["id"]: i["benchmark_tag"] for i in instances}
    oracle = []
    for label in BENCHES + ["All"]:
        ids = sorted(i for i in h if label == "All" or bench_of[i] == label)
        x = [h[i] for i in ids]
        y = [j[i] for i in ids]
        oracle.append({
            "label": label,
            "n": len(ids),
            "pearson": float(stats.pearsonr(x, y)[0]),
            "kendall_tau_b": float(stats.kendalltau(x, y, variant="b")[0]),
            "spearman": float(stats.spearmanr(x, y)[0]),
        })
    with open(d / "oracle.json", "w") as f:
        json.dump({"aggregation": "mean_over_repeats", "rows": oracle}, f, indent=2)
        f.write("\n")


def winrate45():
    """20 wins, 6 ties, 19 losses for prometheus-vision-13b against gpt-4v."""
    outcomes = ["win"] * 20 + ["tie"] * 6 + ["loss"] * 19
    rng.shuffle(outcomes)
    rows = []
    for k, o in enumerate(outcomes):
        a_left = bool(rng.random() < 0.5)
        left, right = ("prometheus-vision-13b", "gpt-4v") if a_left else ("gpt-4v", "prometheus-vision-13b")
        if o == "tie":
            v = "tie"
        else:
            a_wins = o == "win"
            v = "left" if a_wins == a_left else "right"
        bench = BENCHES[k // 15]
        rows.append({"instance_id": f"{bench}-{k % 15:02d}", "left_source": left, "right_source": right, "verdict": v})
    write_jsonl(ROOT / "winrate45" / "choices.jsonl", rows)
    with open(ROOT / "winrate45" / "expected.json", "w") as f:
        json.dump({"a": "prometheus-vision-13b", "b": "gpt-4v", "wins": 20, "ties": 6, "losses": 19,
                   "display": ["44.45", "13.33", "42.22"], "win_or_tie": "57.78"}, f, indent=2)
        f.write("\n")


def tokens(s):
    return re.findall(r"[a-z0-9]+", s.lower())


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


def rouge_l(a, b):
    ta, tb = tokens(a), tokens(b)
    n = lcs(ta, tb)
    if n == 0:
        return 0.0
    p, r = n / len(tb), n / len(ta)
    return 2 * p * r / (p + r)


def rubrics20():
    crit = GENERAL + DOMAIN + [
        "Does the response count the people in the photo correctly?",
        "Is the tone of the response suitable for a young audience?",
        "Does the response mention the safety hazard visible near the stairs?",
        "Does the response compare the two products shown side by side fairly?",
        "Does the response describe the map route from the station to the park?",
        "Is the recipe in the response consistent with the ingredients on the counter?",
        "Does the response identify the make and era of the parked car?",
        "Does the response explain the physics of the experiment in the photo?",
        "Does the response note the time of day from the lighting and shadows?",
        "Does the response summarize the poster text without inventing claims?",
    ]
    kinds = ["general_purpose"] * 5 + ["domain_specific"] * 15
    rows = [rubric(c, k) for c, k in zip(crit, kinds)]
    write_jsonl(ROOT / "rubrics20.jsonl", rows)
    vals = []
    for i in range(len(crit)):
        for j in range(i + 1, len(crit)):
            vals.append(rouge_l(crit[i], crit[j]))
    with open(ROOT / "rubrics20_oracle.json", "w") as f:
        json.dump({"pairs": len(vals), "mean": sum(vals) / len(vals), "max": max(vals), "min": min(vals)}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    os.chdir(ROOT)
    images()
    seeds()
    bench45()
    winrate45()
    rubrics20()
