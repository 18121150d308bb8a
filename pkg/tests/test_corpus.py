import pytest
from hypothesis import given, strategies as st

from debias_tagger.corpus import (
    CorpusError, GoldCorpus, GoldSentence, InsufficientDataError, MappingError, ParseError,
    TagSet, TagsetError, build_vocab, map_to_universal, read_mapping, read_two_column,
    split_dev_test, take_first_tokens, write_two_column,
)

UNI = TagSet.universal()


def corpus_of_lengths(lengths):
    return GoldCorpus([GoldSentence([f"w{i}"] * n, [0] * n) for i, n in enumerate(lengths)], UNI)


def test_universal_tagset():
    assert UNI.size == 12
    assert [UNI.lookup(l) for l in UNI.labels] == list(range(12))
    assert UNI.label(UNI.lookup(".")) == "."


def test_tagset_rejects_duplicates_and_empty():
    with pytest.raises(TagsetError):
        TagSet(["A", "A"])
    with pytest.raises(TagsetError):
        TagSet(["A", ""])
    with pytest.raises(TagsetError):
        TagSet([])


def test_tagset_file_roundtrip(tmp_path):
    p = tmp_path / "tags.txt"
    UNI.write(p)
    assert TagSet.read(p) == UNI


def test_read_two_column(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("a\tDET\ncat\tNOUN\n\n", encoding="utf-8")
    c = read_two_column(p, UNI)
    assert len(c) == 1
    assert c[0].tokens == ("a", "cat")
    assert [UNI.label(t) for t in c[0].tags] == ["DET", "NOUN"]


def test_read_empty_file(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("", encoding="utf-8")
    assert len(read_two_column(p, UNI)) == 0


def test_read_space_separated_is_parse_error(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("cat NOUN\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_two_column(p, UNI)
    assert err.value.lineno == 1


def test_read_two_tabs_is_parse_error(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("a\tDET\ncat\tNOUN\tx\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_two_column(p, UNI)
    assert err.value.lineno == 2


def test_unknown_tag_is_tagset_error(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("cat\tNN\n", encoding="utf-8")
    with pytest.raises(TagsetError):
        read_two_column(p, UNI)


def test_two_column_roundtrip(tmp_path):
    text = "Der\tDET\nHund\tNOUN\nbellt\tVERB\n.\t.\n\nJa\tPRT\n\n"
    p = tmp_path / "g.txt"
    p.write_text(text, encoding="utf-8")
    q = tmp_path / "h.txt"
    write_two_column(read_two_column(p, UNI), q)
    assert q.read_text(encoding="utf-8").rstrip() == text.rstrip()


def test_case_preserved(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("Paris\tNOUN\nparis\tNOUN\n\n", encoding="utf-8")
    assert read_two_column(p, UNI)[0].tokens == ("Paris", "paris")


def test_sentence_invariants():
    with pytest.raises(CorpusError):
        GoldSentence([], [])
    with pytest.raises(CorpusError):
        GoldSentence(["a"], [0, 1])
    with pytest.raises(TagsetError):
        GoldCorpus([GoldSentence(["a"], [12])], UNI)


def test_map_to_universal():
    fine = TagSet(["NN", "VBZ", "JJ"])
    c = GoldCorpus([GoldSentence(["dog", "runs"], [0, 1])], fine)
    out = map_to_universal(c, {"NN": "NOUN", "VBZ": "VERB"})
    assert out.tagset == UNI
    assert [UNI.label(t) for t in out[0].tags] == ["NOUN", "VERB"]
    assert out[0].tokens == ("dog", "runs")


def test_map_to_universal_empty():
    out = map_to_universal(GoldCorpus([], TagSet(["NN"])), {})
    assert len(out) == 0


def test_map_to_universal_missing_entry_names_tag():
    fine = TagSet(["NN", "JJ"])
    c = GoldCorpus([GoldSentence(["big"], [1])], fine)
    with pytest.raises(MappingError, match="JJ"):
        map_to_universal(c, {"NN": "NOUN"})


def test_read_mapping(tmp_path):
    p = tmp_path / "m.txt"
    p.write_text("# comment\nNN\tNOUN\nVBZ\tVERB\n", encoding="utf-8")
    assert read_mapping(p) == {"NN": "NOUN", "VBZ": "VERB"}


def test_build_vocab_min_count():
    v = build_vocab([["a", "b", "a"]], min_count=2)
    assert v.tokens == ["<unk>", "a"]
    assert v.lookup("a") == 1
    assert v.lookup("b") == 0


def test_build_vocab_single():
    v = build_vocab([["x"]], 1)
    assert v.tokens == ["<unk>", "x"]
    assert v.lookup("zzz") == 0


def test_build_vocab_first_occurrence_order():
    v = build_vocab([["c", "a"], ["b", "a", "c"]])
    assert v.tokens == ["<unk>", "c", "a", "b"]


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=6), max_size=6),
       st.integers(1, 3))
def test_build_vocab_deterministic_and_bijective(seqs, k):
    v1 = build_vocab(seqs, k)
    v2 = build_vocab(seqs, k)
    assert v1 == v2
    assert sorted(v1.lookup(t) for t in v1.tokens) == list(range(len(v1)))


def test_take_first_tokens_exact_boundary():
    train, rest = take_first_tokens(corpus_of_lengths([1000, 5]), 1000)
    assert [len(s) for s in train] == [1000]
    assert [len(s) for s in rest] == [5]


def test_take_first_tokens_keeps_whole_sentences():
    # prefix sums 600, 900, 1100 -> the third sentence crosses 1000
    train, rest = take_first_tokens(corpus_of_lengths([600, 300, 200, 50]), 1000)
    assert [len(s) for s in train] == [600, 300, 200]
    assert train.token_count == 1100
    assert [len(s) for s in rest] == [50]


def test_take_first_tokens_insufficient():
    with pytest.raises(InsufficientDataError):
        take_first_tokens(corpus_of_lengths([10]), 1000)


@given(st.lists(st.integers(1, 30), min_size=1, max_size=20), st.integers(1, 200))
def test_take_first_tokens_minimal_prefix(lengths, n):
    c = corpus_of_lengths(lengths)
    if sum(lengths) < n:
        with pytest.raises(InsufficientDataError):
            take_first_tokens(c, n)
        return
    train, rest = take_first_tokens(c, n)
    assert train.token_count >= n
    assert train.token_count - len(train[-1]) < n
    assert len(train) + len(rest) == len(c)


@pytest.mark.parametrize("n, dev, test", [(10, 5, 5), (3, 1, 2), (1, 0, 1)])
def test_split_dev_test(n, dev, test):
    c = corpus_of_lengths([2] * n)
    d, t = split_dev_test(c)
    assert (len(d), len(t)) == (dev, test)
    assert list(d) + list(t) == list(c)


def test_split_dev_test_empty():
    with pytest.raises(InsufficientDataError):
        split_dev_test(GoldCorpus([], UNI))
