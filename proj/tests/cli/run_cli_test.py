#!/usr/bin/env python3
"""End-to-end run of the mcpath CLI: every subcommand on small configs, all
outputs validated against the shipped schemas, and the documented exit codes.

usage: run_cli_test.py <mcpath executable> <schemas dir> <work dir>
"""

import csv
import json
import math
import shutil
import struct
import subprocess
import sys
from pathlib import Path

import jsonschema
from referencing import Registry, Resource

EXE, SCHEMAS, WORK = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])

BLOBS = """
[data]
kind = blobs
samples = 60
input_dim = 2
classes = 2
noise = 0.5
seed = 3

[arch]
hidden = 8, 8

[train]
lr = 0.05
batch = 10
epochs = 200

[subnet]
batch = 10
epochs = 30

[experiment]
trials_a = 2
trials_b = 5
samples_per_segment = 4
jobs = 1

[check]
dropout = true
"""

# 12 points in R^10: the 8-wide half of the first hidden layer is in
# generic position and the counting condition holds (4 * 2 * 2 >= 12).
GENERIC = """
[data]
kind = xor
samples = 12
input_dim = 10
classes = 2
noise = 0.2
seed = 3

[arch]
hidden = 16, 32

[train]
lr = 0.02
batch = 8
epochs = 2000
target_loss = 0.001
stop_on_zero_error = false

[check]
epsilon = 0.1
"""

# Width 3 is below 2 n_L and too narrow for the counting condition.
NEITHER = """
[data]
kind = xor
samples = 40
noise = 0.1
seed = 1

[arch]
hidden = 3, 3

[train]
epochs = 20
"""

failures = []


def check(cond, message):
    if not cond:
        failures.append(message)
        print("FAIL:", message)


def run(*args, expect=(0,)):
    proc = subprocess.run([EXE, *map(str, args)], capture_output=True, text=True)
    check(proc.returncode in expect,
          f"{' '.join(map(str, args))}: exit {proc.returncode}, expected {expect}\n{proc.stdout}{proc.stderr}")
    return proc


def registry():
    resources = []
    for path in SCHEMAS.glob("*.schema.json"):
        doc = json.loads(path.read_text())
        if "$schema" in doc:
            resources.append((path.name, Resource.from_contents(doc)))
    return Registry().with_resources(resources)


REGISTRY = registry()


def validate(doc, schema_name, what):
    schema = json.loads((SCHEMAS / schema_name).read_text())
    try:
        jsonschema.Draft202012Validator(schema, registry=REGISTRY).validate(doc)
    except jsonschema.ValidationError as e:
        check(False, f"{what} does not match {schema_name}: {e.message}")


CSV_TABLES = json.loads((SCHEMAS / "csv_tables.schema.json").read_text())["tables"]


def validate_csv(path, table):
    spec = CSV_TABLES[table]
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    names = [c["name"] for c in spec["columns"]]
    check(rows and rows[0] == names, f"{path.name}: header {rows[0] if rows else None} != {names}")
    for lineno, row in enumerate(rows[1:], start=2):
        check(len(row) == len(names), f"{path.name}:{lineno}: {len(row)} fields")
        for col, value in zip(spec["columns"], row):
            if value == "":
                check(col.get("nullable", False), f"{path.name}:{lineno}: empty {col['name']}")
                continue
            try:
                if col["type"] == "integer":
                    int(value)
                elif col["type"] == "number":
                    float(value)
            except ValueError:
                check(False, f"{path.name}:{lineno}: {col['name']} = {value!r} is not {col['type']}")
            if "enum" in col:
                check(value in col["enum"], f"{path.name}:{lineno}: {col['name']} = {value!r}")
    return rows[1:]


def read_manifest(path, schema):
    data = path.read_bytes()
    head, _, blob = data.partition(b"\n")
    manifest = json.loads(head)
    validate(manifest, schema, path.name)
    return manifest, blob


def write(name, text):
    path = WORK / name
    path.write_text(text)
    return path


def main():
    shutil.rmtree(WORK, ignore_errors=True)
    WORK.mkdir(parents=True)
    cfg = write("blobs.ini", BLOBS)
    a, b = WORK / "a", WORK / "b"

    # train: two solutions plus a width sweep
    run("train", "--config", cfg, "--out", a, "--seed", 1)
    run("train", "--config", cfg, "--out", b, "--seed", 2)
    manifest, blob = read_manifest(a / "model.mcnet", "model_manifest.schema.json")
    check(manifest["widths"] == [2, 8, 8, 2], f"widths {manifest['widths']}")
    check(len(blob) == 8 * manifest["blob_floats"], "model blob length")
    check(manifest["blob_floats"] == 2 * 8 + 8 + 8 * 8 + 8 + 8 * 2, "blob_floats arithmetic")
    check(all(math.isfinite(v) for v in struct.unpack(f"<{manifest['blob_floats']}d", blob)), "finite blob")
    validate_csv(a / "train.csv", "training")

    sweep = WORK / "sweep"
    run("train", "--config", cfg, "--out", sweep, "--widths", "4,6")
    for w in (4, 6):
        m, _ = read_manifest(sweep / f"model_w{w}.mcnet", "model_manifest.schema.json")
        check(m["widths"] == [2, w, w, 2], f"sweep widths {m['widths']}")
    widths = {r[0] for r in validate_csv(sweep / "train.csv", "training")}
    check(widths == {"4", "6"}, f"sweep csv widths {widths}")

    # exp-a / exp-b
    ea = WORK / "ea"
    run("exp-a", "--config", cfg, "--out", ea, "--trials-a", 3, "--p", 0.5, a / "model.mcnet")
    rows = validate_csv(ea / "exp_a.csv", "trials")
    check(sum(r[0] == "A" for r in rows) == 3 * 3, "exp-a trial rows")
    check(sum(r[0] == "A-best" for r in rows) == 3, "exp-a best rows")
    bound = json.loads((ea / "bound.json").read_text())
    validate(bound, "bound.schema.json", "exp-a bound.json")
    check(bound["trials"] == 3, "trials override")

    eb = WORK / "eb"
    run("exp-b", "--config", cfg, "--out", eb, "--trials-b", 4, b / "model.mcnet")
    rows = validate_csv(eb / "exp_b.csv", "trials")
    check(sum(r[0] == "B" for r in rows) == 2 * 4, "exp-b trial rows")

    # path between the two solutions
    p = WORK / "p"
    run("path", "--config", cfg, "--out", p, "--samples-per-segment", 3, a / "model.mcnet", b / "model.mcnet")
    manifest, blob = read_manifest(p / "path.mcpath", "path_manifest.schema.json")
    check(manifest["breakpoints"] == len(manifest["labels"]) + 1, "breakpoint count")
    check(len(blob) == 8 * manifest["blob_floats"] * manifest["breakpoints"], "path blob length")
    _, model_a = (a / "model.mcnet").read_bytes().split(b"\n", 1)
    _, model_b = (b / "model.mcnet").read_bytes().split(b"\n", 1)
    step = 8 * manifest["blob_floats"]
    check(blob[:step] == model_a, "path starts bitwise at model a")
    check(blob[-step:] == model_b, "path ends bitwise at model b")
    rows = validate_csv(p / "path.csv", "path")
    check(len(rows) == 3 * len(manifest["labels"]) + 1, "path csv sample count")
    report = json.loads((p / "path_report.json").read_text())
    validate(report, "path_report.schema.json", "path_report.json")
    validate(json.loads((p / "bound.json").read_text()), "bound.schema.json", "path bound.json")
    check(abs(max(float(r[3]) for r in rows) - report["max_loss"]) < 1e-12, "report max matches csv")
    check(report["max_loss"] <= json.loads((p / "bound.json").read_text())["rhs_achieved"] + 1e-9,
          "path max within achieved bound")

    same = WORK / "same"
    run("path", "--config", cfg, "--out", same, "--shortcut", a / "model.mcnet", a / "model.mcnet")
    m, _ = read_manifest(same / "path.mcpath", "path_manifest.schema.json")
    check(m["breakpoints"] == 1 and m["labels"] == [], "shortcut gives the empty path")
    validate_csv(same / "path.csv", "path")

    # check on three fixtures
    fixtures = [("blobs", BLOBS, (0,), "pass"), ("generic", GENERIC, (0,), "pass"), ("neither", NEITHER, (0, 1), "fail")]
    for name, text, train_codes, want in fixtures:
        c = write(f"{name}.ini", text)
        out = WORK / f"check_{name}"
        run("train", "--config", c, "--out", out, expect=train_codes)
        run("check", "--config", c, "--out", out, out / "model.mcnet")
        doc = json.loads((out / "conditions.json").read_text())
        validate(doc, "conditions.schema.json", f"{name} conditions.json")
        check(doc["overall"] == want, f"check {name}: overall {doc['overall']}, expected {want}")
    doc = json.loads((WORK / "check_blobs" / "conditions.json").read_text())
    check(any(r["condition"] == "dropout-stable" for r in doc["reports"]), "dropout report requested")

    # exit codes
    bad = write("bad.ini", BLOBS + "\n[data]\ncolour = red\n")
    run("train", "--config", write("unknown.ini", "[data]\ncolour = red\n"), expect=(2,))
    run("train", "--config", bad, expect=(2,))
    run("train", expect=(2,))
    run("exp-a", "--config", cfg, "--p", 0.9, a / "model.mcnet", expect=(2,))
    mismatch = write("mismatch.ini", BLOBS.replace("input_dim = 2", "input_dim = 3"))
    run("exp-a", "--config", mismatch, a / "model.mcnet", expect=(2,))
    # squared loss with a huge step blows up instead of saturating
    diverge = write("diverge.ini", BLOBS.replace("lr = 0.05", "lr = 5").replace("noise = 0.5", "noise = 50")
                    .replace("hidden = 8, 8", "hidden = 8, 8\nloss = squared\nactivation = leaky_relu"))
    run("train", "--config", diverge, "--out", WORK / "div", expect=(3,))

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
