from pathlib import Path

import pytest

from debias_tagger.corpus import TagSet


@pytest.fixture
def toy_bundle(tmp_path) -> dict:
    """A five-word English sentence projected onto a Malagasy-style target.

    Four target words are linked one-to-one; ``ny`` is unaligned.
    """
    src = tmp_path / "src.txt"
    src.write_text("The\tDET\nnew\tADJ\nproposal\tNOUN\nhelps\tVERB\n.\t.\n\n", encoding="utf-8")
    tgt = tmp_path / "tgt.txt"
    tgt.write_text("manampy ny fanomezan-kevitra vaovao .\n", encoding="utf-8")
    align = tmp_path / "align.txt"
    # helps-manampy, proposal-fanomezan-kevitra, new-vaovao, .-.
    align.write_text("3-0 2-2 1-3 4-4\n", encoding="utf-8")
    return {"src": src, "tgt": tgt, "align": align, "dir": tmp_path}


@pytest.fixture
def uni() -> TagSet:
    return TagSet.universal()


def write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def toy_data():
    """Small gold train/dev/test corpora and a noisy projected corpus from a 3-tag HMM."""
    from debias_tagger.corpus import split_dev_test, take_first_tokens
    from debias_tagger.synthetic import corrupt_corpus, default_channel, default_hmm, sample_tokens

    hmm = default_hmm(K=3, V=24, seed=5, min_len=3, max_len=7)
    gold = sample_tokens(hmm, 260, seed=1)
    train, rest = take_first_tokens(gold, 120)
    dev, test = split_dev_test(rest)
    channel = default_channel(3, 0.8, 0.2, seed=2, partners=1)
    projected = corrupt_corpus(sample_tokens(hmm, 150, seed=3), channel, seed=4)
    return {"train": train, "dev": dev, "test": test, "projected": projected, "channel": channel}


@pytest.fixture
def tiny_config():
    from debias_tagger.training import TrainConfig

    return TrainConfig(emb_dim=6, hidden_dim=5, stage1_epochs=3, stage2_epochs=2, patience=1, seed=3)


_CRITERIA_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config.stash.setdefault(_CRITERIA_KEY, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append((name, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
