import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[2]

build_python = os.environ.get("OVC_PYTHON_BUILD_DIR")
if build_python:
    sys.path.insert(0, build_python)


def ovc_binary():
    path = os.environ.get("OVC_BINARY", str(ROOT / "build" / "ovc"))
    if not Path(path).exists():
        pytest.skip(f"ovc binary not built at {path}")
    return path


@pytest.fixture(scope="session")
def cli():
    binary = ovc_binary()

    def run(*args, env=None, check=True):
        merged = dict(os.environ)
        merged.pop("OVC_SEED", None)
        merged.update(env or {})
        proc = subprocess.run([binary, *map(str, args)], capture_output=True, text=True, env=merged)
        if check and proc.returncode != 0:
            raise AssertionError(f"ovc {' '.join(map(str, args))} failed: {proc.stderr}")
        return proc

    return run


TINY_CONFIG = """\
embed_dim = 16
hidden_dim = 16
attention_dim = 8
feature_dim = 8
enhancer_hidden1 = 8
enhancer_hidden2 = 8
t_s = 4
epochs = 2
learning_rate = 0.001
"""


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, cli):
    root = tmp_path_factory.mktemp("corpus")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"seed": 4, "train_objects": 10, "test_objects": 4}))
    cli("synth", "--spec", spec, "--out", root / "data")
    return root / "data"


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "tiny.toml"
    path.write_text(TINY_CONFIG)
    return path
