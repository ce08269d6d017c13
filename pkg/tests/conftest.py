"""Shared pytest wiring for the suite."""

import pytest


@pytest.fixture
def emit_verdict(request):
    """Print one PASS/FAIL verdict line on the live output stream.

    Capture is suspended while the line is written so the verdict appears
    in piped or teed pytest output even for passing tests; the same line
    doubles as the assertion message.
    """
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(num: int, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print(line, flush=True)
        else:
            print(line, flush=True)
        assert ok, line

    return emit
