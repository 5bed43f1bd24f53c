import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from adaptkit import _kernels_py, kernels  # noqa: E402

try:
    from adaptkit import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

KERNEL_NAMES = ("project_box_slab", "kmm_pgd", "stump_search", "weighted_median")
BACKENDS = [
    pytest.param(_kernels_py, id="python"),
    pytest.param(_kernels_c, id="cython",
                 marks=pytest.mark.skipif(_kernels_c is None, reason="extension not built")),
]


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every hot kernel through one backend for the duration of a test."""
    impl = request.param
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return impl


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance PASS/FAIL lines collected during the run."""
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
