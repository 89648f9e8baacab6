import subprocess
import sys

from pfadvantage import __version__


def test_cli_version():
    cmd = [sys.executable, "-m", "pfadvantage", "--version"]
    assert subprocess.check_output(cmd).decode().strip() == __version__


def test_cli_usage_error_exit_code():
    cmd = [sys.executable, "-m", "pfadvantage", "complexity", "--models", "foo"]
    proc = subprocess.run(cmd, capture_output=True)
    assert proc.returncode == 2
