#
# Copyright 2026 The attnagg Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Runs every CLI subcommand on a tiny workload and validates the JSON it writes."""

import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema
import referencing


def load_registry(schema_dir):
    schemas = {}
    for path in sorted(schema_dir.glob("*.schema.json")):
        schema = json.loads(path.read_text())
        jsonschema.Draft202012Validator.check_schema(schema)
        schemas[schema["$id"]] = schema
    registry = referencing.Registry().with_resources(
        (sid, referencing.Resource.from_contents(s)) for sid, s in schemas.items())
    return schemas, registry


def main():
    cli = sys.argv[1]
    schemas, registry = load_registry(pathlib.Path(sys.argv[2]))
    failures = []

    def check(path, schema_id):
        path = pathlib.Path(path)
        validator = jsonschema.Draft202012Validator(schemas[schema_id], registry=registry)
        lines = path.read_text().splitlines() if path.suffix == ".jsonl" else [path.read_text()]
        for n, line in enumerate(lines):
            for err in validator.iter_errors(json.loads(line)):
                failures.append(f"{path.name}[{n}] vs {schema_id}: {err.message}")
        print(f"checked {path.name} against {schema_id} ({len(lines)} document(s))")

    def run(*args):
        proc = subprocess.run([cli, *args], capture_output=True, text=True)
        if proc.returncode != 0:
            sys.exit(f"{' '.join(args)} exited {proc.returncode}:\n{proc.stderr}")
        return proc.stdout

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        (tmp / "spec.json").write_text(json.dumps({"num_samples": 120}))
        tiny = {"max_epochs": 2, "freeze_epochs": 1, "burn_in_epochs": 1, "batch_size": 16,
                "model": {"stage1": [{"out_channels": 4, "kernel": 3, "stride": 2}],
                          "stage2": [{"out_channels": 6, "kernel": 3, "stride": 2}],
                          "attention_channels": 8, "classifier_widths": [8]}}
        (tmp / "cfg.json").write_text(json.dumps(tiny))
        check(tmp / "cfg.json", "train_config.schema.json")

        run("gen-data", "--spec", str(tmp / "spec.json"), "--out", str(tmp / "data"))
        check(tmp / "data" / "spec.json", "dataset_spec.schema.json")
        check(tmp / "data" / "manifest.json", "manifest.schema.json")

        run("train", "--config", str(tmp / "cfg.json"), "--data", str(tmp / "data"),
            "--out", str(tmp / "run"))
        check(tmp / "run" / "manifest.json", "manifest.schema.json")
        check(tmp / "run" / "train_config.json", "train_config.schema.json")
        check(tmp / "run" / "epochs.jsonl", "epoch_record.schema.json")
        check(tmp / "run" / "trainer_state.json", "trainer_state.schema.json")
        check(tmp / "run" / "optimizer.json", "optimizer_state.schema.json")

        for protocol in ("map", "peta"):
            report = tmp / f"report_{protocol}.json"
            run("eval", "--checkpoint", str(tmp / "run"), "--data", str(tmp / "data"),
                "--split", "val", "--protocol", protocol, "--out", str(report))
            check(report, "metrics_report.schema.json")
            check(f"{report}.manifest.json", "manifest.schema.json")

        run("export-masks", "--checkpoint", str(tmp / "run"), "--data", str(tmp / "data"),
            "--samples", "0,1", "--out", str(tmp / "masks"))
        check(tmp / "masks" / "manifest.json", "manifest.schema.json")

        run("ablation", "--base", str(tmp / "cfg.json"), "--data", str(tmp / "data"),
            "--seeds", "1", "--out", str(tmp / "ablation.csv"))
        check(tmp / "ablation.csv.manifest.json", "manifest.schema.json")

    for f in failures:
        print("FAIL", f)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
