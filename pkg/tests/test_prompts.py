import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coadapt.errors import DegenerateEmbedding, InvalidEdit, InvalidPrompt, OutOfRange
from coadapt.generator import Vocabulary
from coadapt.prompts import (
    AddPhrase,
    AlignmentMap,
    Prompt,
    Reweight,
    WordSwap,
    apply_edit,
    compute_alignment,
    edit_from_json,
    prompt_embedding,
    tokenize,
)

WORD_POOL = [
    "a", "tranquil", "garden", "serene", "blue", "lake", "vibrant", "green",
    "forest", "with", "blooming", "flowers", "sunflower", "stone", "bridge",
]


def test_tokenize_garden(vocab):
    p = tokenize("a tranquil garden", vocab)
    assert len(p) == 3
    assert p.surfaces == ("a", "tranquil", "garden")
    assert np.array_equal(p.weights, np.ones(3))


def test_tokenize_single_word(vocab):
    assert len(tokenize("x", vocab)) == 1


def test_tokenize_deterministic_ids(gen_cfg):
    a = tokenize("misty stone bridge", Vocabulary(gen_cfg))
    b = tokenize("misty stone bridge", Vocabulary(gen_cfg))
    assert [t.id for t in a.tokens] == [t.id for t in b.tokens]
    assert all(np.array_equal(x.embedding, y.embedding) for x, y in zip(a.tokens, b.tokens))


def test_tokenize_empty_raises(vocab):
    with pytest.raises(InvalidPrompt):
        tokenize("   ", vocab)


def test_token_embeddings_unit_norm(vocab):
    p = tokenize("a tranquil garden with blooming flowers", vocab)
    for t in p.tokens:
        assert abs(np.linalg.norm(t.embedding) - 1.0) < 1e-9


def test_word_swap_sequence(vocab):
    p = tokenize("a serene blue lake", vocab)
    for i, word in ((1, "vibrant"), (2, "green"), (3, "forest")):
        p = apply_edit(p, WordSwap(i, vocab.token(word)))
    assert p.surfaces == ("a", "vibrant", "green", "forest")


def test_add_phrase_at_end(vocab):
    p = tokenize("a tranquil garden", vocab)
    phrase = tuple(vocab.token(w) for w in ("with", "blooming", "flowers"))
    out = apply_edit(p, AddPhrase(3, phrase))
    assert len(out) == 6
    assert out.surfaces == ("a", "tranquil", "garden", "with", "blooming", "flowers")
    # original untouched
    assert len(p) == 3


def test_reweight_identity_scale(vocab):
    p = tokenize("a tranquil garden", vocab)
    out = apply_edit(p, Reweight(1, 1.0))
    assert out == p


def test_apply_edit_out_of_bounds(vocab):
    p = tokenize("a tranquil garden", vocab)
    with pytest.raises(InvalidEdit):
        apply_edit(p, WordSwap(3, vocab.token("x")))
    with pytest.raises(InvalidEdit):
        apply_edit(p, AddPhrase(4, (vocab.token("x"),)))
    with pytest.raises(InvalidEdit):
        apply_edit(p, Reweight(-1, 0.5))


def test_reweight_scale_out_of_range():
    with pytest.raises(OutOfRange):
        Reweight(0, 2.5)


def test_add_phrase_empty_tokens(vocab):
    with pytest.raises(InvalidEdit):
        AddPhrase(0, ())


def test_apply_edit_pure(vocab):
    p = tokenize("a serene blue lake", vocab)
    e = WordSwap(1, vocab.token("vibrant"))
    assert apply_edit(p, e) == apply_edit(p, e)


def test_alignment_identity(vocab):
    p = tokenize("a tranquil garden", vocab)
    a = compute_alignment(p, p)
    assert a.entries == (0, 1, 2)
    assert a.is_identity


def test_alignment_insertion(vocab):
    old = tokenize("a tranquil garden", vocab)
    new = tokenize("a tranquil garden with blooming flowers", vocab)
    a = compute_alignment(old, new)
    assert a.entries == (0, 1, 2, None, None, None)


def test_alignment_word_swap_rewrite(vocab):
    old = tokenize("a serene blue lake", vocab)
    new = tokenize("a vibrant green forest", vocab)
    a = compute_alignment(old, new)
    assert a.entries == (0, None, None, None)


def test_alignment_map_validation():
    with pytest.raises(InvalidEdit):
        AlignmentMap((1, 0), n_old=2)  # order violation
    with pytest.raises(InvalidEdit):
        AlignmentMap((0, 0), n_old=2)  # injectivity violation
    with pytest.raises(InvalidEdit):
        AlignmentMap((5,), n_old=2)  # out of bounds


@st.composite
def prompt_texts(draw):
    n = draw(st.integers(min_value=1, max_value=8))
    idx = draw(st.lists(st.integers(0, len(WORD_POOL) - 1), min_size=n, max_size=n))
    return " ".join(WORD_POOL[i] for i in idx)


@settings(max_examples=40, deadline=None)
@given(text=prompt_texts())
def test_alignment_self_identity_property(text, vocab):
    p = tokenize(text, vocab)
    a = compute_alignment(p, p)
    assert a.entries == tuple(range(len(p)))


@settings(max_examples=40, deadline=None)
@given(t1=prompt_texts(), t2=prompt_texts())
def test_alignment_injective_order_preserving(t1, t2, vocab):
    a = compute_alignment(tokenize(t1, vocab), tokenize(t2, vocab))
    seen = [e for e in a.entries if e is not None]
    assert len(set(seen)) == len(seen)
    assert seen == sorted(seen)


def test_prompt_embedding_single_token(vocab):
    p = tokenize("sunflower", vocab)
    assert np.allclose(prompt_embedding(p), p.tokens[0].embedding)


def test_prompt_embedding_duplicate_tokens(vocab):
    one = tokenize("sunflower", vocab)
    two = tokenize("sunflower sunflower", vocab)
    assert np.allclose(prompt_embedding(one), prompt_embedding(two))


def test_prompt_embedding_self_cosine(vocab):
    p = tokenize("a tranquil garden", vocab)
    e = prompt_embedding(p)
    assert abs(float(e @ e) - 1.0) < 1e-12


def test_prompt_embedding_reweight_identity(vocab):
    p = tokenize("a tranquil garden", vocab)
    q = apply_edit(p, Reweight(2, 1.0))
    assert np.array_equal(prompt_embedding(p), prompt_embedding(q))


def test_prompt_embedding_degenerate(vocab):
    p = tokenize("a tranquil garden", vocab)
    zeroed = Prompt(p.tokens, np.zeros(3))
    with pytest.raises(DegenerateEmbedding):
        prompt_embedding(zeroed)


def test_prompt_json_round_trip(vocab):
    p = apply_edit(tokenize("a tranquil garden", vocab), Reweight(1, 1.5))
    back = Prompt.from_json(p.to_json(), vocab)
    assert back == p


def test_edit_json_round_trip(vocab):
    edits = [
        WordSwap(1, vocab.token("vibrant")),
        AddPhrase(2, (vocab.token("with"), vocab.token("flowers"))),
        Reweight(0, -1.5),
    ]
    for e in edits:
        back = edit_from_json(e.to_json(), vocab)
        assert back == e
