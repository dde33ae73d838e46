# Copyright 2026 The dynalab Authors
# SPDX-License-Identifier: Apache-2.0

import random

import pytest


@pytest.fixture
def corpus(tmp_path):
    rng = random.Random(5)
    words = "the quick brown fox jumps over a lazy dog".split()
    path = tmp_path / "corpus.txt"
    path.write_text(" ".join(rng.choice(words) for _ in range(3000)))
    return path
