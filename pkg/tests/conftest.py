import ctypes
import ctypes.util
import itertools

import pytest


def _libc_fnmatch():
    name = ctypes.util.find_library("c")
    if name is None:
        return None
    libc = ctypes.CDLL(name)
    libc.fnmatch.argtypes = [ctypes.c_char_p, ctypes.c_char_p, ctypes.c_int]

    def fnm(pattern: str, text: str) -> bool:
        return libc.fnmatch(pattern.encode(), text.encode(), 0) == 0

    return fnm


LIBC_FNMATCH = _libc_fnmatch()


@pytest.fixture(scope="session")
def libc_fnmatch():
    if LIBC_FNMATCH is None:
        pytest.skip("no C library fnmatch available")
    return LIBC_FNMATCH


def all_strings(alphabet, max_len):
    """Every string over ``alphabet`` up to ``max_len``, in shortlex order."""
    alphabet = sorted(alphabet)
    for n in range(max_len + 1):
        for chars in itertools.product(alphabet, repeat=n):
            yield "".join(chars)


# one summary line per acceptance criterion, printed after the test run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
