import numpy as np
import pytest

from offscreen.pipeline import build_tables, censor_corpus
from offscreen.synthgen import SynthConfig, generate_corpus
from offscreen.tracking import PlayerTrack


def make_track(x, y=None, game_id="g01", player_id="p1", half=1, position="midfielder"):
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x) if y is None else np.asarray(y, dtype=float)
    t = np.round(np.arange(len(x)) * 0.1, 10)
    return PlayerTrack(game_id, player_id, half, position, t, x, y)


def track_from_speeds(speeds, position="midfielder"):
    """Straight-line track along x whose interval speeds are ``speeds``."""
    x = np.concatenate(([0.0], np.cumsum(np.asarray(speeds, dtype=float) * 0.1)))
    return make_track(x, position=position)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(SynthConfig(games=4, half_length=120.0, seed=11))


@pytest.fixture(scope="session")
def small_tables(small_corpus):
    subs = censor_corpus(small_corpus.tracks, small_corpus.events)
    return subs, build_tables(small_corpus.tracks, subs)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record (and print) one PASS/FAIL line for an acceptance criterion."""
    def record(tag, name, passed, detail):
        line = f"{tag:<5} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
