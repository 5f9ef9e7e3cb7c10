import logging

import pandas as pd
import pytest

from lodestar.utils.timestamps import _utc_now_isoformat
from lodestar.utils.utils import NoEvidenceWarning, WarningAdapter, whitespace_token_count


@pytest.mark.parametrize('testdescr,input_for_custom_warning_function', [
    ('Only mandatory parameters', {'msg': 'Minimal warning message'}),
    ('Using optional parameter category', {'msg': 'Nothing found', 'warning_category': NoEvidenceWarning}),
    ('Using all parameters',
     {'msg': 'Warning (all parameters)', 'warning_stacklevel': 2, 'warning_category': NoEvidenceWarning}),
])
def test_log_and_warning_from_adapter(caplog, recwarn, input_for_custom_warning_function, testdescr):
    logger = logging.getLogger(__name__)
    logger.addHandler(logging.NullHandler())
    logger = WarningAdapter(logger)
    logger.log_with_warning(**input_for_custom_warning_function)

    assert len(recwarn) == 1
    assert str(recwarn[-1].message) == input_for_custom_warning_function['msg']
    assert len(caplog.records) == 1
    assert caplog.records[-1].message == input_for_custom_warning_function['msg']


def call_adapter(logger, msg):
    logger.warning(msg)
    logger.info(msg)


def test_adapter_reports_caller(caplog):
    logger = logging.getLogger(__name__)
    logger.setLevel(logging.INFO)
    call_adapter(WarningAdapter(logger), 'Message text')
    assert [record.funcName for record in caplog.records] == ['call_adapter', 'call_adapter']


def test_no_evidence_warning_default_message():
    assert 'No evidence' in str(NoEvidenceWarning())


@pytest.mark.parametrize('testdescr,text,expected', [
    ('empty', '', 0),
    ('single word', 'panda', 1),
    ('mixed whitespace', ' a red\tpanda\n eats  bamboo ', 5),
])
def test_whitespace_token_count(text, expected, testdescr):
    assert whitespace_token_count(text) == expected


def test_utc_now_isoformat_shape():
    value = _utc_now_isoformat()
    assert value.endswith('Z')
    assert pd.Timestamp(value[:-1]).microsecond % 1000 == 0
