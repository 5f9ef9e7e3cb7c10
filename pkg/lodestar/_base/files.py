"""Deterministic JSON serialization and atomic file writes."""
import json
import os
import tempfile


def dumps_canonical(data) -> str:
    """Serialize ``data`` with sorted keys and a trailing newline, so equal data gives equal bytes."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def write_atomic(path, content):
    """Write ``content`` (str or bytes) to ``path`` via a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    data = content.encode('utf-8') if isinstance(content, str) else content
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def write_json(path, data):
    """Write ``data`` as canonical JSON, atomically."""
    write_atomic(path, dumps_canonical(data))


def read_json(path):
    """Read a JSON document."""
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
