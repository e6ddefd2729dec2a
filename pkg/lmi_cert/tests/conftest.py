import json
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def exchange_doc(tmp_path_factory):
    """Pendulum exchange document produced by the primary tool's CLI (the
    single coupling point between the two packages)."""
    path = tmp_path_factory.mktemp("docs") / "pendulum_lmi.json"
    subprocess.run([sys.executable, "-m", "dwsim.cli", "export-lmi",
                    "--hbar", "4", "--out", str(path)], check=True)
    with open(path) as fh:
        return json.load(fh)
