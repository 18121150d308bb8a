"""Synthetic verification harness.

Gold corpora are drawn from a hidden Markov model with known parameters, and
projected corpora are made by pushing the gold tags through a known noise
channel. Training the three tagger variants on this data shows whether the
bias layer beats naive use of the noisy labels, and whether the learned bias
matrix lines up with the channel.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import (GoldCorpus, GoldSentence, TagSet, build_vocab, split_dev_test,
                     take_first_tokens)
from .evaluation import bias_to_csv, token_accuracy
from .neural import init_params, make_gold_examples, make_projected_examples, predict
from .projection import Hard, ProjectedCorpus, ProjectedSentence, Soft
from .training import TrainConfig, coerce_fields, joint_train, pretrain

log = logging.getLogger(__name__)


def _check_stochastic(name, m, axis=-1):
    m = np.asarray(m, dtype=float)
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if not np.allclose(m.sum(axis=axis), 1.0, atol=1e-9, rtol=0):
        raise ValueError(f"{name} rows must sum to 1")
    return m


@dataclass
class HMMSpec:
    start: np.ndarray   # (K,)
    trans: np.ndarray   # (K, K) row-stochastic
    emit: np.ndarray    # (K, V) row-stochastic
    min_len: int = 5
    max_len: int = 20

    def __post_init__(self):
        self.start = _check_stochastic("start", self.start)
        self.trans = _check_stochastic("trans", self.trans)
        self.emit = _check_stochastic("emit", self.emit)
        K = self.start.shape[0]
        if self.trans.shape != (K, K) or self.emit.shape[0] != K:
            raise ValueError("HMM parameter shapes are inconsistent")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")

    @property
    def K(self) -> int:
        return self.start.shape[0]

    @property
    def V(self) -> int:
        return self.emit.shape[1]


@dataclass
class NoiseChannel:
    C: np.ndarray          # (K_gold, K_proj) row-stochastic
    p_unaligned: float = 0.0

    def __post_init__(self):
        self.C = _check_stochastic("channel", self.C)
        if not 0.0 <= self.p_unaligned <= 1.0:
            raise ValueError("p_unaligned must lie in [0, 1]")


def tag_labels(k: int) -> TagSet:
    return TagSet(f"T{i}" for i in range(k))


def word_form(v: int) -> str:
    return f"w{v}"


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_sentence(spec: HMMSpec, rng: np.random.Generator) -> GoldSentence:
    T = int(rng.integers(spec.min_len, spec.max_len + 1))
    tags = np.empty(T, dtype=np.int64)
    words = np.empty(T, dtype=np.int64)
    tags[0] = rng.choice(spec.K, p=spec.start)
    for t in range(1, T):
        tags[t] = rng.choice(spec.K, p=spec.trans[tags[t - 1]])
    for t in range(T):
        words[t] = rng.choice(spec.V, p=spec.emit[tags[t]])
    return GoldSentence([word_form(w) for w in words.tolist()], tags.tolist())


def sample_corpus(spec: HMMSpec, n_sentences: int, seed) -> GoldCorpus:
    rng = _rng(seed)
    return GoldCorpus([sample_sentence(spec, rng) for _ in range(n_sentences)], tag_labels(spec.K))


def sample_tokens(spec: HMMSpec, n_tokens: int, seed) -> GoldCorpus:
    """Sample whole sentences until at least ``n_tokens`` tokens are drawn."""
    rng = _rng(seed)
    sentences, total = [], 0
    while total < n_tokens:
        s = sample_sentence(spec, rng)
        sentences.append(s)
        total += len(s)
    return GoldCorpus(sentences, tag_labels(spec.K))


def stationary_distribution(trans: np.ndarray, iters: int = 10_000, tol: float = 1e-13) -> np.ndarray:
    """Power iteration on the row-stochastic transition matrix."""
    trans = np.asarray(trans, dtype=float)
    pi = np.full(trans.shape[0], 1.0 / trans.shape[0])
    for _ in range(iters):
        nxt = pi @ trans
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi


def corrupt(sentence: GoldSentence, ch: NoiseChannel, seed) -> ProjectedSentence:
    """Push gold tags through the channel.

    A full hard draw from ``C[y_t]`` is made for every token. Each token then
    keeps its hard label with probability ``1 - p_unaligned``; otherwise it
    gets the relative frequency of the sentence's hard draw as a soft label.
    """
    rng = _rng(seed)
    k_proj = ch.C.shape[1]
    cum = np.cumsum(ch.C, axis=1)
    u = rng.random(len(sentence))
    hard = [int(min(np.searchsorted(cum[y], x, side="right"), k_proj - 1))
            for y, x in zip(sentence.tags, u)]
    unaligned = rng.random(len(sentence)) < ch.p_unaligned
    soft = None
    labels = []
    for h, un in zip(hard, unaligned):
        if un:
            if soft is None:
                soft = Soft(tuple(np.bincount(hard, minlength=k_proj) / len(hard)))
            labels.append(soft)
        else:
            labels.append(Hard(h))
    return ProjectedSentence(sentence.tokens, labels)


def corrupt_corpus(corpus: GoldCorpus, ch: NoiseChannel, seed, tagset: TagSet | None = None) -> ProjectedCorpus:
    rng = _rng(seed)
    tagset = tagset or tag_labels(ch.C.shape[1])
    return ProjectedCorpus([corrupt(s, ch, rng) for s in corpus], tagset)


def channel_agreement(A: np.ndarray, C: np.ndarray, counts=None, min_count: int = 50) -> float:
    """Fraction of eligible gold tags whose row argmax in ``A`` matches that of ``C``.

    ``counts[i]`` is how often gold tag ``i`` occurs in the projected training
    data; tags seen fewer than ``min_count`` times are skipped. With no counts
    every row is eligible.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    if A.shape != C.shape:
        raise ValueError(f"A has shape {A.shape} but C has shape {C.shape}")
    rows = np.arange(A.shape[0])
    if counts is not None:
        rows = rows[np.asarray(counts) >= min_count]
    if rows.size == 0:
        raise ValueError("no gold tag is frequent enough to compare")
    return float(np.mean(np.argmax(A[rows], axis=1) == np.argmax(C[rows], axis=1)))


# ---------------------------------------------------------------- default oracle

def default_hmm(K: int = 6, V: int = 200, seed: int = 0, shared_mass: float = 0.8,
                pairs=None, shared_frac: float = 0.6, posterior=(0.58, 0.635),
                context: float = 100.0, trans_base: float = 100.0, min_len: int = 5,
                max_len: int = 20) -> HMMSpec:
    """A structured random HMM whose ambiguous words sit on given tag pairs.

    A ``shared_frac`` share of the vocabulary is emitted by exactly two tags
    ``(a, b)`` taken round robin from ``pairs``. Each such word is built so
    that, under the stationary tag prior, seeing it alone gives tag ``a`` a
    posterior drawn uniformly from the ``posterior`` range. Shared words take
    at most ``shared_mass`` of any tag's emission probability; the remainder
    goes to a Zipfian block of words the tag owns.

    Transition rows are Dirichlet with weight ``trans_base`` everywhere and
    ``context`` on two preferred successors. Large equal weights (the
    default) give near-uniform rows, so neighbours say little and a shared
    word stays ambiguous in context. Sentences start from the stationary
    distribution, which is then the tag prior at every position. Without
    ``pairs`` the tags are paired along a random cycle.
    """
    rng = np.random.default_rng(seed)
    trans = np.empty((K, K))
    for i in range(K):
        alpha = np.full(K, trans_base)
        alpha[rng.choice(K, 2, replace=False)] = context
        trans[i] = rng.dirichlet(alpha)
    prior = stationary_distribution(trans)
    start = prior / prior.sum()
    if pairs is None:
        order = rng.permutation(K)
        pairs = [(int(order[j]), int(order[(j + 1) % K])) for j in range(K)]
    pairs = list(pairs)

    n_shared = int(round(shared_frac * V)) if pairs else 0
    shared = np.zeros((K, V))
    for w in range(n_shared):
        a, b = pairs[w % len(pairs)]
        q = rng.uniform(*posterior)
        mass = rng.uniform(0.5, 1.5)
        shared[a, w] = mass * q / prior[a]
        shared[b, w] = mass * (1.0 - q) / prior[b]
    if n_shared:
        # one global scale keeps every word's posterior ratio intact
        shared *= shared_mass / shared.sum(axis=1).max()
    own = np.array_split(rng.permutation(np.arange(n_shared, V)), K)
    emit = shared
    for i in range(K):
        zipf = 1.0 / (rng.permutation(len(own[i])) + 1)
        emit[i, own[i]] = (1.0 - emit[i].sum()) * zipf / zipf.sum()
    return HMMSpec(start, trans, emit, min_len, max_len)


def confusable_pairs(ch: "NoiseChannel") -> list[tuple[int, int]]:
    """Each gold tag paired with the projected tag it is most often confused with."""
    C = ch.C.copy()
    np.fill_diagonal(C, -1.0)
    return [(i, int(np.argmax(C[i]))) for i in range(C.shape[0]) if C[i].max() > 0]


def default_channel(K: int = 6, diag: float = 0.7, p_unaligned: float = 0.15,
                    seed: int = 0, partners: int = 2) -> NoiseChannel:
    """Diagonal ``diag``; the off-diagonal mass goes to ``partners`` confusable tags.

    The first partner of tag ``i`` is the next tag of a random cyclic order
    and takes two thirds of the off-diagonal mass, so confusion is
    systematic rather than spread evenly.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(K)
    nxt = {int(order[j]): int(order[(j + 1) % K]) for j in range(K)}
    C = np.zeros((K, K))
    off = 1.0 - diag
    for i in range(K):
        C[i, i] = diag
        if off == 0:
            continue
        first = nxt[i]
        if partners <= 1 or K < 3:
            C[i, first] += off
            continue
        others = [j for j in range(K) if j not in (i, first)]
        second = int(rng.choice(others))
        C[i, first] += off * 2 / 3
        C[i, second] += off / 3
    return NoiseChannel(C, p_unaligned)


@dataclass
class ExperimentConfig:
    K: int = 6
    V: int = 200
    gold_tokens: int = 1000
    projected_tokens: int = 20000
    eval_tokens: int = 6000
    diag: float = 0.7
    p_unaligned: float = 0.15
    partners: int = 1
    shared_frac: float = 0.6
    shared_mass: float = 0.8
    posterior_lo: float = 0.58
    posterior_hi: float = 0.635
    context: float = 100.0
    trans_base: float = 100.0
    min_len: int = 5
    max_len: int = 20
    seed: int = 0
    emb_dim: int = 32
    hidden_dim: int = 32
    lr: float = 1.0
    clip_norm: float = 5.0
    stage1_epochs: int = 20
    stage2_epochs: int = 20
    projected_epochs: int = 5
    patience: int = 5
    proj_per_gold: int = 5
    min_agreement_count: int = 50

    def train_config(self, **changes) -> TrainConfig:
        base = TrainConfig(emb_dim=self.emb_dim, hidden_dim=self.hidden_dim, lr=self.lr,
                           stage1_epochs=self.stage1_epochs, stage2_epochs=self.stage2_epochs,
                           patience=self.patience, clip_norm=self.clip_norm, seed=self.seed,
                           proj_per_gold=self.proj_per_gold)
        return base.replace(**changes)

    @classmethod
    def from_values(cls, values: dict) -> "ExperimentConfig":
        return coerce_fields(cls, values)


@dataclass
class ExperimentReport:
    config: dict
    accuracy: dict                 # variant -> test accuracy
    dev_accuracy: dict
    agreement: float
    bias_csv: str
    channel: np.ndarray
    learned_A: np.ndarray
    gold_counts: list = field(default_factory=list)
    token_counts: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.config.items()]
        lines.append("")
        lines += [f"{k:<10} tokens {v}" for k, v in self.token_counts.items()]
        lines.append("")
        for name, acc in self.accuracy.items():
            lines.append(f"{name:<10} test {acc:.4f}  dev {self.dev_accuracy[name]:.4f}")
        lines.append(f"channel_agreement {self.agreement:.4f}")
        return "\n".join(lines) + "\n"

    def channel_csv(self) -> str:
        ts = tag_labels(self.channel.shape[0])
        return bias_to_csv(self.channel, ts, tag_labels(self.channel.shape[1]))


def _test_accuracy(params, vocab, corpus: GoldCorpus) -> float:
    pred = [predict(params, vocab.encode(s.tokens)) for s in corpus]
    return token_accuracy(pred, corpus.tag_sequences())


def run_recovery_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Train the annotated-only, projected-only and debias taggers on one synthetic draw."""
    master = np.random.SeedSequence(cfg.seed)
    hmm_seed, chan_seed, gold_seed, proj_seed, noise_seed, init_seed = (
        int(s.generate_state(1)[0]) for s in master.spawn(6))
    channel = default_channel(cfg.K, cfg.diag, cfg.p_unaligned, chan_seed, cfg.partners)
    hmm = default_hmm(cfg.K, cfg.V, hmm_seed, cfg.shared_mass, confusable_pairs(channel) or None,
                      cfg.shared_frac, (cfg.posterior_lo, cfg.posterior_hi), cfg.context, cfg.trans_base,
                      cfg.min_len, cfg.max_len)

    gold_all = sample_tokens(hmm, cfg.gold_tokens + cfg.eval_tokens, gold_seed)
    gold_train, rest = take_first_tokens(gold_all, cfg.gold_tokens)
    dev, test = split_dev_test(rest)
    parallel_gold = sample_tokens(hmm, cfg.projected_tokens, proj_seed)
    projected = corrupt_corpus(parallel_gold, channel, noise_seed)

    vocab = build_vocab(gold_train.token_sequences() + projected.token_sequences())
    gold_ex = make_gold_examples(gold_train, vocab)
    dev_ex = make_gold_examples(dev, vocab)
    tc = cfg.train_config(seed=init_seed)

    def fresh():
        return init_params(tc.emb_dim, tc.hidden_dim, len(vocab), cfg.K, cfg.K, seed=init_seed)

    acc, dev_acc = {}, {}

    annotated, rep = pretrain(fresh(), gold_ex, dev_ex, tc)
    acc["annotated"] = _test_accuracy(annotated, vocab, test)
    dev_acc["annotated"] = rep.chosen_record.dev_accuracy
    log.info("annotated test %.4f", acc["annotated"])

    direct_ex = make_projected_examples(projected, vocab, head="gold")
    proj_only, prep = pretrain(fresh(), direct_ex, dev_ex,
                               tc.replace(stage1_epochs=cfg.projected_epochs), stage="projected")
    acc["projected"] = _test_accuracy(proj_only, vocab, test)
    dev_acc["projected"] = prep.chosen_record.dev_accuracy
    log.info("projected test %.4f", acc["projected"])

    bias_ex = make_projected_examples(projected, vocab, head="bias")
    debias, jrep = joint_train(annotated, gold_ex, bias_ex, dev_ex, tc,
                               baseline=dev_acc["annotated"])
    acc["debias"] = _test_accuracy(debias, vocab, test)
    best = jrep.chosen_record.dev_accuracy if jrep.chosen is not None else None
    dev_acc["debias"] = max(dev_acc["annotated"], best) if best is not None else dev_acc["annotated"]
    log.info("debias test %.4f", acc["debias"])

    gold_counts = np.bincount(np.concatenate([np.asarray(s.tags) for s in parallel_gold]),
                              minlength=cfg.K)
    agreement = channel_agreement(debias.A, channel.C, gold_counts, cfg.min_agreement_count)
    return ExperimentReport(
        config=dataclasses.asdict(cfg),
        accuracy=acc,
        dev_accuracy=dev_acc,
        agreement=agreement,
        bias_csv=bias_to_csv(debias.A, tag_labels(cfg.K), tag_labels(cfg.K)),
        channel=channel.C,
        learned_A=debias.A.copy(),
        gold_counts=gold_counts.tolist(),
        token_counts={"gold": gold_train.token_count, "dev": dev.token_count,
                      "test": test.token_count, "projected": projected.token_count},
    )
