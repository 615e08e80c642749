#!/usr/bin/env python3
"""Run the forkcast CLI and validate its JSON output against docs/*.schema.json.

usage: validate_schemas.py FORKCAST DOCS_DIR DATA_DIR
"""

import copy
import json
import os
import subprocess
import sys
import tempfile

import jsonschema
from referencing import Registry, Resource


def load_schemas(docs):
    schemas = {}
    for name in sorted(os.listdir(docs)):
        if name.endswith(".schema.json"):
            with open(os.path.join(docs, name)) as f:
                schema = json.load(f)
            jsonschema.Draft202012Validator.check_schema(schema)
            schemas[name[: -len(".schema.json")]] = schema
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values()
    )
    return {
        k: jsonschema.Draft202012Validator(s, registry=registry) for k, s in schemas.items()
    }


def run(exe, *args):
    proc = subprocess.run([exe, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(args)} exited {proc.returncode}: {proc.stderr}")
    return proc.stdout


def main():
    exe, docs, data = sys.argv[1:4]
    validators = load_schemas(docs)
    failures = 0

    def check(kind, doc, label, expect_valid=True):
        nonlocal failures
        errors = list(validators[kind].iter_errors(doc))
        ok = (not errors) if expect_valid else bool(errors)
        print(f"{'ok  ' if ok else 'FAIL'} {kind}: {label}")
        if not ok:
            failures += 1
            for e in errors[:5]:
                print(f"     {list(e.absolute_path)}: {e.message}")

    blocks = os.path.join(data, "blocks.csv")
    point = os.path.join(data, "operating_point_blocks.csv")
    equal = os.path.join(data, "equal_blocks.csv")

    fits = {}
    for family in ["exp", "lognormal", "tpl", "semi-iid", "semi-inid"]:
        doc = json.loads(run(exe, "fit", "--blocks", blocks, "--period", "0",
                             "--lambda", "0.0017", "--family", family, "--zero-miners", "2"))
        fits[family] = doc
        check("fit", doc, f"fit {family}")
        check("model", doc["model"], f"model from fit {family}")
    check("fit", json.loads(run(exe, "fit", "--blocks", point, "--lambda", "5e-4", "--family", "tpl")),
          "fit operating-point tpl")
    check("fit", json.loads(run(exe, "fit", "--blocks", equal, "--lambda", "0.002", "--family", "exp")),
          "fit equal counts exp")

    models = [
        '{"kind":"fixed","lambdas":[0.001,0.0007]}',
        '{"kind":"inid_null","families":[{"name":"exp","rate":20000},{"name":"tpl","alpha":0.5,"beta":8000}]}',
        json.dumps(fits["lognormal"]["model"]),
        json.dumps(fits["semi-iid"]["model"]),
    ]
    for i, m in enumerate(models):
        check("model", json.loads(m), f"model input {i}")
        for extra in ([], ["--fixed-draw"]):
            doc = json.loads(run(exe, "simulate", "--model", m, "--delta0", "0.5,2",
                                 "--rounds", "20000", "--seed", "4", *extra))
            check("simulate", doc, f"simulate model {i} {' '.join(extra)}")

    check("implied", json.loads(run(exe, "implied", "delta", "--forkrate", "0.0041",
                                    "--lambda", "0.0017", "--hhi", "0.2")), "implied delta")
    check("implied", json.loads(run(exe, "implied", "hhi", "--forkrate", "0.0041",
                                    "--lambda", "0.0017", "--delta0", "0.815")), "implied hhi")

    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "report.json")
        run(exe, "pipeline", "--blocks", blocks, "--stale", os.path.join(data, "stale.csv"),
            "--propagation", os.path.join(data, "propagation.csv"),
            "--hashrate", os.path.join(data, "hashrate.csv"), "--out", out)
        with open(out) as f:
            report = json.load(f)
        check("report", report, "pipeline on the fixture")

        solo = os.path.join(tmp, "solo.csv")
        with open(solo, "w") as f:
            f.write("height,timestamp,bits,miner_id\n")
            for h in range(100):
                f.write(f"{h},{1600000000 + 600 * h},0x1d00ffff,solo\n")
        bad_out = os.path.join(tmp, "solo.json")
        proc = subprocess.run([exe, "pipeline", "--blocks", solo, "--stale", os.path.join(data, "stale.csv"),
                               "--propagation", os.path.join(data, "propagation.csv"),
                               "--hashrate", os.path.join(data, "hashrate.csv"), "--out", bad_out,
                               "--period-length", "50"], capture_output=True)
        if proc.returncode != 3:
            print(f"FAIL pipeline on a one-miner chain exited {proc.returncode}, expected 3")
            failures += 1
        with open(bad_out) as f:
            check("report", json.load(f), "pipeline with failed periods")

    # The schemas must reject broken documents.
    broken = copy.deepcopy(report)
    del broken["schema_version"]
    check("report", broken, "report without schema_version is rejected", expect_valid=False)
    broken = copy.deepcopy(report)
    broken["periods"][0]["model_fork_rates"][0]["fork_rate"] = 1.5
    check("report", broken, "fork rate above 1 is rejected", expect_valid=False)
    broken = copy.deepcopy(report)
    broken["periods"][0]["errors"].append({"stage": "x", "code": "y", "message": "z"})
    check("report", broken, "ok period with errors is rejected", expect_valid=False)
    check("model", {"kind": "iid_null", "n": 1, "family": {"name": "exp", "rate": 1}},
          "model with one miner is rejected", expect_valid=False)
    check("model", {"kind": "semi_iid", "counts": [3, 4]},
          "semi model without gamma is rejected", expect_valid=False)
    broken = copy.deepcopy(fits["exp"])
    broken["model"]["family"]["name"] = "pareto"
    check("fit", broken, "fit with unknown family is rejected", expect_valid=False)

    print(f"{failures} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
