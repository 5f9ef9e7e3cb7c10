import pytest

from lodestar.knowledge import (GroundTruthFeature, ImageEvidence, TextEvidence, UserPrompt, content_hash_bytes,
                                content_hash_text)
from lodestar.knowledge.evidence import is_well_formed_url


def test_content_hash_text_normalizes_case_and_whitespace():
    assert content_hash_text('The  Red\nPanda ') == content_hash_text('the red panda')
    assert content_hash_text('the red panda') != content_hash_text('the red pandas')


def test_content_hash_bytes_is_raw():
    assert content_hash_bytes(b'abc') == 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'


@pytest.mark.parametrize('testdescr,url,expected', [
    ('https', 'https://example.org/page', True),
    ('http with port', 'http://example.org:8080/x?y=1', True),
    ('relative', '/page', False),
    ('other scheme', 'ftp://example.org/file', False),
    ('no host', 'https://', False),
])
def test_is_well_formed_url(url, expected, testdescr):
    assert is_well_formed_url(url) is expected


@pytest.mark.parametrize('testdescr,kwargs,message', [
    ('blank text', {'id': 'p', 'text': '   '}, 'no text'),
    ('unknown class', {'id': 'p', 'text': 'x', 'entity_class': 'Robots'}, 'Unknown entity class'),
    ('unknown concept', {'id': 'p', 'text': 'x', 'concept_tags': ['XX']}, 'Unknown concept'),
])
def test_user_prompt_invalid(kwargs, message, testdescr):
    with pytest.raises(ValueError, match=message):
        UserPrompt(**kwargs)


def test_user_prompt_dict_roundtrip():
    prompt = UserPrompt('p1', 'A red panda', 'Animal', ['CC', 'PF'])
    assert prompt.concept_tags == frozenset({'PF', 'CC'})
    assert prompt.to_dict()['concept_tags'] == ['CC', 'PF']
    assert UserPrompt.from_dict(prompt.to_dict()) == prompt


def test_text_evidence_create():
    text = TextEvidence.create('Pandas eat bamboo.', 'https://example.org/p', 'snippet', '2024-01-01T00:00:00Z',
                               'panda diet')
    assert text.content_hash == content_hash_text('pandas eat BAMBOO.')
    assert TextEvidence.from_dict(text.to_dict()) == text


def test_text_evidence_rejects_malformed_url():
    with pytest.raises(ValueError, match='Malformed source url'):
        TextEvidence.create('x', 'not a url', '', None, 'q')


def test_image_evidence_key_is_content_hash():
    image = ImageEvidence.create(b'bytes', 'title', 'https://img.example.org/1.png', 'q', 'image/png', 4, 3)
    assert image.bytes_ref == image.content_hash == content_hash_bytes(b'bytes')


def test_image_evidence_rejects_empty_size():
    with pytest.raises(ValueError, match='invalid size'):
        ImageEvidence.create(b'bytes', 'title', 'https://img.example.org/1.png', 'q', 'image/png', 0, 3)


def test_ground_truth_feature_validation():
    assert GroundTruthFeature('f1', 'It is red.', 'PF').concept == 'PF'
    with pytest.raises(ValueError):
        GroundTruthFeature('f1', 'It is red.', 'XX')
    with pytest.raises(ValueError):
        GroundTruthFeature('f1', ' ', 'PF')
