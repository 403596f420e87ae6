import pytest

from trifactor.network import BASELINE, TRIPLE_FACTOR, Flow, Network, RunSpec
from trifactor.simkernel import RadioModel


def line_positions(n, spacing=100.0):
    return [(i * spacing, 0.0) for i in range(n)]


def make_spec(positions, protocol="AODV", mode=TRIPLE_FACTOR, rng=150.0, loss=0.0,
              duration=10.0, traffic=(), adversaries=(), **kw):
    w = max(x for x, _ in positions) or 1.0
    h = max(y for _, y in positions) or 1.0
    return RunSpec(node_count=len(positions), duration=duration, protocol=protocol,
                   security_mode=mode, arena=(w, h), positions=list(positions),
                   radio=RadioModel(range=rng, frame_loss_prob=loss),
                   traffic=list(traffic), adversaries=list(adversaries), **kw)


def make_net(positions, seed=1, **kw):
    return Network(make_spec(positions, **kw), seed)


@pytest.fixture
def line4():
    """A-B-C-D line, each node hearing only its direct neighbours."""
    return make_net(line_positions(4), mode=BASELINE)


# one line per acceptance criterion, echoed in the terminal summary so the
# verdicts are visible even with output capture on
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
