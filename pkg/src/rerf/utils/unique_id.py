import json
import uuid
from typing import Any, Mapping, Optional


def generate_unique_id(reference: Optional[str] = None, length: Optional[int] = None) -> str:
    """
    Generate a hexadecimal identifier.

    Reproducible (UUID5) when `reference` is given, random (UUID4) otherwise,
    truncated to `length` characters (at most 32) when requested.
    """
    if reference is not None:
        unique_id = uuid.uuid5(uuid.NAMESPACE_URL, reference).hex
    else:
        unique_id = uuid.uuid4().hex

    if length is not None and length > 0:
        return unique_id[:min(length, 32)]
    return unique_id


def experiment_id(config: Mapping[str, Any], length: int = 12) -> str:
    """
    Stable identifier of an experiment configuration.

    Keys are sorted before hashing, so two configs that differ only in key
    order share an id. The output directory is excluded: moving a run does
    not change what was computed.
    """
    canonical = {k: v for k, v in config.items() if k != 'output_dir'}
    reference = json.dumps(canonical, sort_keys=True, default=str, separators=(',', ':'))
    return generate_unique_id(reference=reference, length=length)
