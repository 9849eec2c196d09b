"""Shared fixtures: the synthetic two-cluster corpus and its trained table."""

import random
from dataclasses import dataclass

import pytest

from embgeom import cli, embed_store

CLUSTER_A = ("river", "water", "shore", "fish")
CLUSTER_B = ("money", "loan", "deposit", "teller")


@dataclass(frozen=True)
class TwoClusterCorpus:
    """2,000 two-token sentences with disjoint co-occurrence clusters.

    Words from one cluster never share a sentence with words from the
    other; the shared token "bank" appears in 1,000 sentences, half in
    cluster-A company and half in cluster-B company.
    """

    sentences: tuple
    text: str
    cluster_a: tuple = CLUSTER_A
    cluster_b: tuple = CLUSTER_B

    def bank_sentences(self):
        return [s.split() for s in self.sentences if "bank" in s.split()]


def make_two_cluster_corpus(seed=13):
    rng = random.Random(seed)
    sentences = []
    for words in (CLUSTER_A, CLUSTER_B):
        for i in range(1000):
            if i < 500:
                sent = rng.sample(words, 1)
                sent.insert(rng.randrange(2), "bank")
            else:
                sent = rng.sample(words, 2)
            sentences.append(" ".join(sent))
    rng.shuffle(sentences)
    return TwoClusterCorpus(
        sentences=tuple(sentences), text="\n".join(sentences) + "\n"
    )


@pytest.fixture(scope="session")
def two_cluster_corpus():
    return make_two_cluster_corpus()


@pytest.fixture(scope="session")
def trained_cluster_table(two_cluster_corpus, tmp_path_factory):
    """Embedding table trained on the two-cluster corpus via the CLI."""
    root = tmp_path_factory.mktemp("cluster")
    corpus_path = root / "corpus.txt"
    table_path = root / "trained.vec"
    corpus_path.write_text(two_cluster_corpus.text, encoding="utf-8")
    code = cli.main([
        "train", "--corpus", str(corpus_path), "--dim", "16", "--window", "2",
        "--epochs", "30", "--seed", "42", "--out", str(table_path),
        "--format", "tsv",
    ])
    assert code == 0
    with open(table_path, "rb") as fh:
        return embed_store.load_embeddings_text(fh.read())
