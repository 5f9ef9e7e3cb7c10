from numpy.random import default_rng
import pytest

from lodestar.knowledge import ImageEvidence, KnowledgeBase, TextEvidence, kb_context_digest, kb_merge
from lodestar.knowledge.knowledge_base import DIGEST_HEADER


def make_text(i, content=None, length=20):
    content = content or f'Fact number {i}. ' + 'x' * length
    return TextEvidence.create(content, f'https://example.org/{i}', f'snippet {i}', None, 'q')


def make_image(i):
    return ImageEvidence.create(f'image {i}'.encode(), f'image {i}', f'https://img.example.org/{i}.png', 'q',
                                'image/png', 4, 4)


def test_merge_appends_new_and_keeps_order():
    kb = kb_merge(KnowledgeBase(), [make_text(1), make_text(2)], [make_image(1)], 0)
    kb = kb_merge(kb, [make_text(2), make_text(3)], [make_image(1), make_image(2)], 1)

    assert [text.source_url for text in kb.texts] == ['https://example.org/1', 'https://example.org/2',
                                                      'https://example.org/3']
    assert len(kb.images) == 2
    assert kb.round_added[make_text(2).content_hash] == 0
    assert kb.round_added[make_text(3).content_hash] == 1


def test_merge_dedupes_within_batch_by_normalized_content():
    kb = kb_merge(KnowledgeBase(), [make_text(1, 'Same Fact'), make_text(2, 'same   fact')], [], 0)
    assert len(kb.texts) == 1
    assert kb.texts[0].source_url == 'https://example.org/1'


def test_merge_does_not_modify_original():
    kb = KnowledgeBase()
    kb_merge(kb, [make_text(1)], [], 0)
    assert len(kb) == 0


def test_merge_negative_round():
    with pytest.raises(ValueError):
        kb_merge(KnowledgeBase(), [make_text(1)], [], -1)


def test_constructor_checks_round_added():
    text = make_text(1)
    with pytest.raises(ValueError, match='No round_added'):
        KnowledgeBase([text], [], {})
    with pytest.raises(ValueError, match='unknown entries'):
        KnowledgeBase([text], [], {text.content_hash: 0, 'f' * 64: 1})
    with pytest.raises(ValueError, match='distinct'):
        KnowledgeBase([text, text], [], {text.content_hash: 0})


def test_hash_set_never_shrinks_and_entries_trace_to_raw_results():
    rng = default_rng(seed=7)
    pool_texts = [make_text(i) for i in range(40)]
    pool_images = [make_image(i) for i in range(40)]
    raw_hashes = set()
    kb = KnowledgeBase()
    for round_ in range(500):
        texts = [pool_texts[i] for i in rng.integers(0, 40, size=rng.integers(0, 4))]
        images = [pool_images[i] for i in rng.integers(0, 40, size=rng.integers(0, 3))]
        raw_hashes.update(entry.content_hash for entry in texts + images)
        kept_texts = [text for text in texts if rng.random() < 0.5]
        kept_images = [image for image in images if rng.random() < 0.5]
        before = kb.hashes()
        kb = kb_merge(kb, kept_texts, kept_images, round_)
        assert before <= kb.hashes()
        assert kb.hashes() <= raw_hashes


def test_digest_lists_texts_then_images():
    kb = kb_merge(KnowledgeBase(), [make_text(1, 'Pandas eat bamboo.')], [make_image(1)], 0)
    digest = kb_context_digest(kb, 1000)
    assert digest.startswith(DIGEST_HEADER)
    assert '[T1] Pandas eat bamboo. (source: https://example.org/1)\n' in digest
    assert f'[I1] image 1 (source: https://img.example.org/1.png, blob: {make_image(1).bytes_ref})\n' in digest
    assert digest.index('[T1]') < digest.index('[I1]')


def test_digest_empty_kb():
    assert kb_context_digest(KnowledgeBase(), 256) == DIGEST_HEADER


def test_digest_drops_oldest_round_first():
    kb = kb_merge(KnowledgeBase(), [make_text(1, length=200)], [], 0)
    kb = kb_merge(kb, [make_text(2, length=200)], [], 1)
    digest = kb_context_digest(kb, 300)
    assert len(digest) <= 300
    assert '[T2]' in digest
    assert '[T1]' not in digest


def test_digest_is_deterministic_and_bounded():
    kb = kb_merge(KnowledgeBase(), [make_text(i, length=100) for i in range(10)], [make_image(i) for i in range(5)], 0)
    first = kb_context_digest(kb, 800)
    assert first == kb_context_digest(kb, 800)
    assert len(first) <= 800


def test_digest_minimum_budget():
    with pytest.raises(ValueError):
        kb_context_digest(KnowledgeBase(), 100)
