import json
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")
from referencing import Registry, Resource  # noqa: E402

from latentkit.cli import main  # noqa: E402

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"


def load(name):
    return json.loads((SCHEMAS / f"{name}.schema.json").read_text())


def validator(name):
    registry = Registry().with_resources(
        (f"{n}.schema.json", Resource.from_contents(load(n))) for n in ("config", "manifest", "error", "report")
    )
    schema = load(name)
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    return cls(schema, registry=registry)


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("schemas")
    main(["synth", "--out", str(root / "data"), "--n", "300", "--seed", "2", "--groups", "2"])
    out = root / "out"
    code = main([
        "pipeline", "--responses", str(root / "data" / "responses.csv"),
        "--codebook", str(root / "data" / "codebook.json"), "--out", str(out),
        "--group", "group", "--outcome", "F1", "--trials", "20", "--restarts", "2",
    ])
    assert code == 0
    return root


def test_report_and_manifest_validate(run):
    out = run / "out"
    validator("report").validate(json.loads((out / "report.json").read_text()))
    validator("manifest").validate(json.loads((out / "manifest.json").read_text()))


def test_error_record_validates(run):
    out = run / "bad"
    assert main(["efa", "--responses", str(run / "data" / "responses.csv"), "--codebook",
                 str(run / "data" / "codebook.json"), "--out", str(out), "--factors", "0"]) == 2
    validator("error").validate(json.loads((out / "error.json").read_text()))


def test_config_schema_rejects_unknown_keys():
    v = validator("config")
    v.validate({"factors": 3, "rotation": "varimax"})
    assert not v.is_valid({"bogus": 1})
    assert not v.is_valid({"factors": 0})
