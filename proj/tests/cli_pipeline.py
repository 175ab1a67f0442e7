"""End-to-end CLI checks: full pipeline, schema validation, exit codes, determinism."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

CLI = str(pathlib.Path(sys.argv[1]).resolve())
SCHEMA = json.loads(pathlib.Path(sys.argv[2]).read_text())
failures = []


def run(args, cwd, expect=0, threads=None):
    cmd = [CLI, "-q"] + (["--threads", str(threads)] if threads else []) + args
    p = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True)
    if p.returncode != expect:
        failures.append(f"{' '.join(args)}: exit {p.returncode}, expected {expect}\n{p.stderr}")
    return p


def check(ok, what):
    if not ok:
        failures.append(what)


def pipeline(d, threads=1):
    run(["synth", "--task", "random", "--patients", "6", "--records", "2", "--duration", "120", "--out", "data"], d)
    run(["preprocess", "--data", "data", "--out", "windows.bin", "--report", "pre.json"], d)
    run(["features", "--data", "data", "--out", "feats.csv"], d)
    run(["autoencoder", "train", "--in", "windows.bin", "--bottleneck", "4", "--epochs", "5", "--out", "model.json"], d)
    run(["autoencoder", "encode", "--model", "model.json", "--in", "windows.bin", "--out", "codes.csv"], d)
    run(["mvm", "--data", "data", "--label", "sbp", "--out", "mvm.json", "--histogram", "hist.csv"], d, threads=threads)
    run(["mi", "--table", "feats.csv", "--features", "hr,rwat", "--target", "sbp", "--bootstrap", "0.2,0.5,1.0",
         "--runs", "4", "--out", "mi.json", "--bootstrap-csv", "boot.csv"], d, threads=threads)
    run(["mi", "--table", "codes.csv", "--features", "ae_0,ae_1,ae_2,ae_3", "--target", "sbp",
         "--out", "mi_codes.json"], d, threads=threads)
    run(["split", "make", "--data", "data", "--scheme", "data-overlap", "--out", "split.csv"], d)
    run(["split", "audit", "--split", "split.csv", "--manifest", "data", "--out", "leak.json"], d)
    run(["calib", "--table", "feats.csv", "--split", "split.csv", "--method", "offset", "--out", "calib.json",
         "--drift-csv", "drift.csv"], d)
    run(["report", "--mvm", "mvm.json", "--mi", "mi.json", "--leakage", "leak.json", "--calib", "calib.json",
         "--preprocess", "pre.json", "--out-dir", "rep"], d)


def snapshot(d):
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(pathlib.Path(d).rglob("*")) if p.is_file()}


with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
    pipeline(a, threads=1)
    pipeline(b, threads=3)

    rep = json.loads((pathlib.Path(a) / "rep" / "report.json").read_text())
    try:
        jsonschema.validate(rep, SCHEMA)
    except jsonschema.ValidationError as e:
        failures.append(f"full report fails the schema: {e.message}")
    for key in ("mvm", "mi", "leakage", "calibration", "preprocess"):
        check(rep.get(key) is not None, f"report section {key} is null")
    check(len(rep["leakage"]["data_overlap"]) > 0, "data-overlap split audited clean")

    boot = (pathlib.Path(a) / "rep" / "bootstrap.csv").read_text().splitlines()
    check(boot[0] == "fraction,sample_size,run,mi_bits", f"bootstrap header {boot[0]!r}")
    check(len(boot) == 1 + 3 * 4, f"bootstrap CSV has {len(boot) - 1} rows, expected 12")
    for name in ("histogram.csv", "drift.csv"):
        check((pathlib.Path(a) / "rep" / name).exists(), f"report lacks {name}")

    sa, sb = snapshot(a), snapshot(b)
    check(sa.keys() == sb.keys(), "runs produced different file sets")
    differing = [k for k in sa if sa[k] != sb.get(k)]
    check(not differing, f"outputs differ between runs: {differing}")

    # Overwrite protection.
    p = run(["mi", "--table", "feats.csv", "--features", "hr", "--target", "sbp", "--out", "mi.json"], a, expect=1)
    check("--force" in p.stderr, "overwrite refusal does not mention --force")
    run(["--force", "mi", "--table", "feats.csv", "--features", "hr", "--target", "sbp", "--out", "mi.json"], a)

    # Unknown flag: usage error with help text.
    p = run(["mvm", "--data", "data", "--label", "sbp", "--bogus"], a, expect=1)
    check("Usage" in p.stderr or "--help" in p.stderr, "unknown flag prints no usage text")

    # Constant target: zero-entropy error.
    feats = (pathlib.Path(a) / "feats.csv").read_text().splitlines()
    header = feats[0].split(",")
    col = header.index("sbp")
    rows = [r.split(",") for r in feats[1:]]
    for r in rows:
        r[col] = "120"
    (pathlib.Path(a) / "flat.csv").write_text("\n".join([feats[0]] + [",".join(r) for r in rows]) + "\n")
    p = run(["mi", "--table", "flat.csv", "--features", "hr", "--target", "sbp"], a, expect=2)
    check("zero-entropy target" in p.stderr, f"zero-entropy message missing: {p.stderr!r}")

    # Single-artifact bundle: absent sections are null and still valid.
    run(["report", "--mvm", "mvm.json", "--out-dir", "rep_mvm"], a)
    only = json.loads((pathlib.Path(a) / "rep_mvm" / "report.json").read_text())
    try:
        jsonschema.validate(only, SCHEMA)
    except jsonschema.ValidationError as e:
        failures.append(f"mvm-only report fails the schema: {e.message}")
    check(only["mvm"] is not None, "mvm section missing")
    for key in ("mi", "leakage", "calibration", "preprocess"):
        check(only[key] is None, f"mvm-only report has {key}")

    # Missing input file.
    run(["mvm", "--data", "nowhere", "--label", "sbp"], a, expect=2)

if failures:
    for f in failures:
        print("FAIL:", f)
    sys.exit(1)
print("cli pipeline: all checks pass")
