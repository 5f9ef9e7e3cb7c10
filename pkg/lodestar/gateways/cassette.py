"""
Record and replay of every external-service exchange of a run.

A cassette is a JSON-lines file, one entry per exchange. In record mode entries are appended as exchanges complete;
in replay mode responses are served from the entries, matched by request fingerprint.
"""
from collections import namedtuple, defaultdict, deque
from enum import Enum
import base64
import hashlib
import json
import logging
import os
import threading

from lodestar.utils.utils import LodestarError

LOG = logging.getLogger(__name__)
LOG.addHandler(logging.NullHandler())

SERVICES = ('model', 'text_search', 'image_search', 'page_reader', 'image_fetch', 'image_generator')


class CassetteMode(Enum):
    """How gateways use the cassette."""

    Record = 'record'
    Replay = 'replay'
    Passthrough = 'off'


class DeterminismError(LodestarError):
    """Raised in replay mode when a request has no matching cassette entry."""

    def __init__(self, msg, expected, actual):
        super().__init__(msg)
        self.expected = expected
        self.actual = actual


def fingerprint(service, role, inputs, blob_hashes=()):
    """Return the hex SHA-256 of a canonical JSON rendering of a request."""
    document = {'service': service, 'role': role, 'inputs': inputs, 'blobs': list(blob_hashes)}
    canonical = json.dumps(document, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


_ENTRY_FIELDS = ('service', 'fingerprint', 'request_digest', 'status', 'response_b64',
                 'tokens_in', 'tokens_out', 'latency_ms', 'recorded_at', 'meta')


class CassetteEntry(namedtuple('CassetteEntry', _ENTRY_FIELDS)):
    """One recorded exchange. ``status`` is 'ok' or 'error'; failed exchanges carry the error in ``meta``."""

    @classmethod
    def create(cls, service, fingerprint, request_digest, payload, tokens_in=0, tokens_out=0, latency_ms=0,
               recorded_at=None, meta=None, status='ok'):
        response_b64 = base64.b64encode(payload or b'').decode('ascii')
        return cls(service, fingerprint, request_digest, status, response_b64, int(tokens_in), int(tokens_out),
                   int(latency_ms), recorded_at, dict(meta or {}))

    @property
    def payload(self) -> bytes:
        return base64.b64decode(self.response_b64)

    @property
    def role(self):
        return self.meta.get('role')

    def to_json(self):
        return json.dumps(self._asdict(), sort_keys=True, separators=(',', ':'), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data):
        missing = [field for field in _ENTRY_FIELDS if field not in data]
        if missing:
            raise ValueError(f'Cassette entry lacks fields {missing}.')
        return cls(*(data[field] for field in _ENTRY_FIELDS))


class Cassette():
    """An ordered transcript of the exchanges of one run.

    Parameters
    ----------
    path
        JSON-lines file backing the cassette. ``None`` keeps entries in memory only.
    mode
        :class:`CassetteMode`. In ``Replay`` the entries are read from ``path`` on construction.
    run_id
        Identifier of the run the cassette belongs to.
    """

    def __init__(self, path=None, mode=CassetteMode.Record, run_id=None, entries=None):
        self.path = path
        self.mode = CassetteMode(mode)
        self.run_id = run_id
        self._lock = threading.Lock()
        self._entries = list(entries) if entries is not None else []
        self._queues = None
        if self.mode is CassetteMode.Replay:
            if entries is None:
                self._entries = self.read_entries(path)
            self._build_queues()

    @staticmethod
    def read_entries(path):
        """Read all entries of a cassette file."""
        entries = []
        with open(path, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(CassetteEntry.from_dict(json.loads(line)))
                except ValueError as exc:
                    raise ValueError(f'Malformed cassette entry at {path}:{line_number}: {exc}') from exc
        return entries

    def _build_queues(self):
        self._queues = defaultdict(deque)
        for entry in self._entries:
            self._queues[(entry.service, entry.fingerprint)].append(entry)

    @property
    def entries(self):
        with self._lock:
            return list(self._entries)

    def __len__(self):
        with self._lock:
            return len(self._entries)

    def record(self, entry):
        """Append an entry. In record mode it is also appended to the backing file."""
        with self._lock:
            self._entries.append(entry)
            if self.mode is CassetteMode.Record and self.path is not None:
                os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
                with open(self.path, 'a', encoding='utf-8') as f:
                    f.write(entry.to_json() + '\n')

    def truncate(self, count):
        """Drop all entries after the first ``count``, in memory and on disk. Used when resuming a run."""
        with self._lock:
            self._entries = self._entries[:count]
            if self.path is not None:
                content = ''.join(entry.to_json() + '\n' for entry in self._entries)
                with open(self.path, 'w', encoding='utf-8') as f:
                    f.write(content)

    def lookup(self, service, fingerprint):
        """Return the next unconsumed entry recorded for this request.

        Raises
        ------
        DeterminismError
            If the cassette holds no further entry for the request.
        """
        with self._lock:
            queue = self._queues.get((service, fingerprint))
            if queue:
                return queue.popleft()
            pending = [q[0] for (s, _), q in self._queues.items() if s == service and q]
            expected = min(pending, key=self._entries.index).fingerprint if pending else None
        raise DeterminismError(f'No cassette entry for {service} request {fingerprint}; '
                               f'next unconsumed {service} entry has fingerprint {expected}.',
                               expected, fingerprint)

    def unconsumed(self):
        """Return the entries not yet served in replay mode."""
        with self._lock:
            remaining = [entry for queue in self._queues.values() for entry in queue] if self._queues else []
            order = {id(entry): i for i, entry in enumerate(self._entries)}
            return sorted(remaining, key=lambda entry: order[id(entry)])
