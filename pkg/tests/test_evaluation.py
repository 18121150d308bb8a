import numpy as np
import pytest

from debias_tagger.corpus import TagSet
from debias_tagger.evaluation import (EvaluationError, bias_to_csv, confusion, evaluate,
                                      read_bias_csv, token_accuracy)

ABC = TagSet(["A", "B", "C"])


def test_accuracy_identical():
    assert token_accuracy([[0, 1], [2]], [[0, 1], [2]]) == 1.0


def test_accuracy_counts_tokens_not_sentences():
    # one long sentence right, one short sentence wrong
    assert token_accuracy([[0, 0, 0], [1]], [[0, 0, 0], [2]]) == 0.75


@pytest.mark.parametrize("pred,gold", [([[0]], [[0], [1]]), ([[0, 1]], [[0]]), ([], [])])
def test_accuracy_shape_errors(pred, gold):
    with pytest.raises(EvaluationError):
        token_accuracy(pred, gold)


def test_confusion_orientation():
    m = confusion([[1, 1, 2]], [[0, 1, 2]], 3)
    assert m[0, 1] == 1 and m[1, 1] == 1 and m[2, 2] == 1
    assert m.sum() == 3


def test_report_text_and_scores():
    r = evaluate([[0, 1, 1, 2]], [[0, 1, 2, 2]], ABC)
    assert r.to_text().splitlines()[0] == "accuracy 0.7500"
    np.testing.assert_allclose(r.precision, [1.0, 0.5, 1.0])
    np.testing.assert_allclose(r.recall, [1.0, 1.0, 0.5])


def test_report_unused_tag_scores_zero():
    r = evaluate([[0]], [[0]], ABC)
    assert r.precision[2] == 0 and r.recall[2] == 0


def test_report_csv():
    text = evaluate([[0, 1]], [[0, 1]], ABC).to_csv()
    assert text.startswith("metric,value\naccuracy,1.000000\n")
    assert "gold\\pred,A,B,C" in text


def test_bias_csv_layout():
    A = np.array([[0.9, 0.1], [0.25, 0.75], [0.0, 1.0]])
    text = bias_to_csv(A, ABC, TagSet(["x", "y"]))
    assert text.splitlines() == [",x,y", "A,0.900000,0.100000", "B,0.250000,0.750000",
                                 "C,0.000000,1.000000"]


def test_bias_csv_roundtrip(tmp_path):
    A = np.random.default_rng(0).normal(size=(3, 3))
    p = tmp_path / "A.csv"
    p.write_text(bias_to_csv(A, ABC, ABC), encoding="utf-8")
    back, g, pr = read_bias_csv(p)
    assert g == ABC and pr == ABC
    np.testing.assert_allclose(back, A, atol=5e-7)


def test_bias_csv_shape_mismatch():
    with pytest.raises(EvaluationError):
        bias_to_csv(np.eye(2), ABC, ABC)
