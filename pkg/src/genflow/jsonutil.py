"""Canonical JSON emission."""

import json


def dumps(doc) -> str:
    """Sorted keys and fixed indentation so equal documents give equal bytes."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True)
