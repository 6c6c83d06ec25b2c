"""
Pytest wiring for the Django test suite under amifsite/: configures settings,
sets up the test environment and test databases the way ``manage.py test`` does.
"""
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / 'amifsite'))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'amifsite.settings')

import django  # noqa: E402

django.setup()

_runner = None
_old_config = None


def pytest_configure(config):
    global _runner, _old_config
    from django.test.runner import DiscoverRunner

    _runner = DiscoverRunner(verbosity=0, interactive=False)
    _runner.setup_test_environment()
    _old_config = _runner.setup_databases()


def pytest_unconfigure(config):
    if _runner is not None:
        _runner.teardown_databases(_old_config)
        _runner.teardown_test_environment()
