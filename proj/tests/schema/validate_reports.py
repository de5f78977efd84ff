"""Runs the hdm tool on small configs and validates its reports against the JSON schemas."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

TRANSFER = {
    "domain_a": {"kind": "shapes", "n_samples": 100, "side": 6, "seed": 0},
    "domain_b": {"kind": "shapes", "n_samples": 70, "side": 6, "seed": 1, "intensity_shift": 0.1},
    "model": {"hidden": [8], "time_frequencies": 2},
    "pretrain": {"iterations": 20, "batch_size": 16, "epoch_iterations": 10},
    "regimes": ["hybrid", "none"],
    "methods": ["vanilla", "probe"],
    "budgets": [4],
    "seeds": [1, 2],
    "pool_size": 10,
    "n_validation": 20,
    "finetune": {"max_epochs": 2},
    "probe": {"max_epochs": 2, "hidden": 4},
}

VERIFY = {"checks": {"schedule_identities": {"points": 100}, "score": {"probes": 10}}}


def run(hdm, *args):
    result = subprocess.run([hdm, *args], capture_output=True, text=True)
    if result.returncode != 0:
        sys.exit(f"hdm {' '.join(args)} exited {result.returncode}: {result.stderr}")


def check(schema_path, report_path):
    schema = json.loads(pathlib.Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    jsonschema.validate(json.loads(pathlib.Path(report_path).read_text()), schema,
                        cls=jsonschema.Draft202012Validator)
    print(f"{report_path.name}: valid against {pathlib.Path(schema_path).name}")


def main():
    hdm, schemas = sys.argv[1], pathlib.Path(sys.argv[2])
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        (tmp / "transfer.json").write_text(json.dumps(TRANSFER))
        (tmp / "verify.json").write_text(json.dumps(VERIFY))
        run(hdm, "finetune", str(tmp / "transfer.json"), "-o", str(tmp / "finetune"))
        run(hdm, "verify", str(tmp / "verify.json"), "-o", str(tmp / "verify"))
        check(schemas / "report.schema.json", tmp / "finetune" / "report.json")
        check(schemas / "verification.schema.json", tmp / "verify" / "verify_report.json")


if __name__ == "__main__":
    main()
