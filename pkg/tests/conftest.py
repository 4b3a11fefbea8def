import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from prego.dataset import Dataset, VideoRecord  # noqa: E402
from prego.domain import ActionVocabulary, FrameStream, MistakeAnnotation  # noqa: E402
from prego.llm import StubBehavior, StubServer  # noqa: E402

TOY_NAMES = ["attach-cabin", "attach-body", "attach-track", "attach-blade", "attach-figurine", "attach-wheel"]


@pytest.fixture
def toy_vocab():
    return ActionVocabulary.from_names(TOY_NAMES)


def make_record(video_id, labels, gt=None, first_mistake=None, category=None, task="bulldozer", fps=30.0, hint=None):
    gt = labels if gt is None else gt
    return VideoRecord(
        video_id,
        task,
        fps,
        FrameStream(video_id, fps, labels),
        FrameStream(video_id, fps, gt),
        MistakeAnnotation(first_mistake, category),
        hint,
    )


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def toy_dataset(toy_vocab):
    recs = (
        make_record("c1", [0, 0, 1, 1, 2, 2]),
        make_record("c2", [0, 1, 1, 2, 2, 2]),
        make_record("m1", [0, 0, 2, 2, 1, 1], first_mistake=2, category="order"),
    )
    return Dataset(toy_vocab, recs)


@pytest.fixture
def stub_server():
    servers = []

    def start(behavior=None):
        server = StubServer(behavior or StubBehavior()).start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.stop()
