import logging
import os
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from minhashreg.config import DEFAULT_SEED, SEED_ENV_VAR

logger = logging.getLogger(__name__)


def resolve_seed(seed: Optional[int] = None) -> int:
    """
    Resolve the seed of a run.

    An explicit seed wins, then the seed environment variable, then
    the package default.

    Parameters
    ----------
    seed :
        Explicitly requested seed, if any.

    Returns
    -------
    resolved_seed :
        Non-negative integer seed.
    """
    if seed is None:
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is None or env_seed.strip() == "":
            seed = DEFAULT_SEED
        else:
            try:
                seed = int(env_seed)
            except ValueError:
                raise ValueError(
                    f"{SEED_ENV_VAR} must be an integer, but '{env_seed}' was set."
                )
    if seed < 0:
        raise ValueError(f"Seeds must be non-negative, but {seed} was passed.")
    return int(seed)


def spawn_generator(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """
    Build the random generator of one keyed sub-stream.

    The generator depends only on (seed, stream, index), never on how
    many other sub-streams were drawn before it, so work split across
    workers in any order reproduces the same draws.

    Parameters
    ----------
    seed :
        Run seed.
    stream :
        Identifier of the logical stream (permutations, signs, noise...).
    index :
        Position within the stream, eg. the permutation or replicate index.

    Returns
    -------
    generator :
        Counter-based Philox generator keyed on the three integers.
    """
    if seed < 0 or stream < 0 or index < 0:
        raise ValueError(
            f"Seed stream keys must be non-negative, got ({seed}, {stream}, {index})."
        )
    seed_sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(int(stream), int(index))
    )
    return np.random.Generator(np.random.Philox(seed_sequence))


def derive_seed(seed: int, stream: int, index: int = 0) -> int:
    """
    Derive a 63-bit child seed from a keyed sub-stream.
    """
    return int(spawn_generator(seed, stream, index).integers(0, 2**63 - 1))


def tabularize_records(records: List[Dict]) -> pd.DataFrame:
    """
    Transform a list of result records into a flat dataframe.

    Nested dictionaries are flattened into prefixed columns and
    list or tuple values are spread over indexed columns, padding
    shorter sequences with missing values.

    Parameters
    ----------
    records :
        Result records, eg. verification checks or simulation cells.

    Returns
    -------
    tabularized_records :
        One row per record, one column per flattened field.
    """
    logger.debug(f"Received {len(records)} records to tabularize.")

    flat_records = []
    for record in records:
        flat_records.append(_flatten_record(record))

    max_sequence_lens = {}
    for flat_record in flat_records:
        for field_name, field_value in flat_record.items():
            if isinstance(field_value, (tuple, list)):
                max_sequence_lens[field_name] = max(
                    max_sequence_lens.get(field_name, 0), len(field_value)
                )

    expanded_records = []
    for flat_record in flat_records:
        expanded_record = {}
        for field_name, field_value in flat_record.items():
            if field_name in max_sequence_lens:
                values = (
                    list(field_value)
                    if isinstance(field_value, (tuple, list))
                    else [field_value]
                )
                for i in range(max_sequence_lens[field_name]):
                    expanded_record[f"{field_name}_{i}"] = (
                        values[i] if i < len(values) else np.nan
                    )
            else:
                expanded_record[field_name] = field_value
        expanded_records.append(expanded_record)

    tabularized_records = pd.DataFrame(expanded_records)
    logger.debug(f"Tabularized record dataframe shape: {tabularized_records.shape}")

    return tabularized_records


def _flatten_record(record: Dict, prefix: str = "") -> Dict:
    flat_record = {}
    for field_name, field_value in record.items():
        key = f"{prefix}{field_name}"
        if isinstance(field_value, dict):
            flat_record.update(_flatten_record(field_value, prefix=f"{key}."))
        elif isinstance(field_value, np.ndarray):
            flat_record[key] = field_value.tolist()
        else:
            flat_record[key] = field_value
    return flat_record
