import os
import json
import logging
import tempfile
from typing import List, Sequence

import numpy as np
import pandas as pd

# Initialize logger
logger = logging.getLogger(__name__)

def ensure_directory(directory: str) -> str:
    """Create a directory if it doesn't exist and return its path."""
    if not os.path.exists(directory):
        os.makedirs(directory)
        logger.info(f"Created directory: {directory}")
    return directory

def make_rng(seed) -> np.random.Generator:
    """
    Create a numpy random generator.
    
    Args:
        seed: Integer seed, SeedSequence, or None for fresh entropy
        
    Returns:
        numpy Generator (PCG64)
    """
    return np.random.default_rng(seed)

def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """
    Derive independent child generators from one seed.
    
    Args:
        seed: Root seed
        count: Number of child streams
        
    Returns:
        List of numpy Generators
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]

def as_vector(values: Sequence[float], length: int = 3) -> np.ndarray:
    """
    Convert a sequence to a float64 vector of the given length.
    
    Raises:
        ValueError: If the length does not match
    """
    vector = np.asarray(values, dtype=np.float64).reshape(-1)
    if vector.shape[0] != length:
        raise ValueError(f"Expected {length} components, got {vector.shape[0]}")
    return vector

def atomic_write_text(path: str, text: str):
    """
    Write text to a file so that readers never observe a partial file.
    
    Args:
        path: Destination path
        text: File contents
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_")
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise

def dump_json(data) -> str:
    """Serialize data as stable, human-readable JSON."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"

def format_duration(seconds):
    """
    Format duration in seconds to a readable string.
    
    Args:
        seconds: Duration in seconds
        
    Returns:
        Formatted duration string
    """
    if seconds is None:
        return "N/A"
    
    minutes, secs = divmod(seconds, 60)
    if minutes < 60:
        return f"{int(minutes)}:{int(secs):02d}"
    else:
        hours, minutes = divmod(minutes, 60)
        return f"{int(hours)}:{int(minutes):02d}:{int(secs):02d}"

def write_csv(rows: Sequence[dict], columns: Sequence[str], path: str) -> str:
    """
    Write dictionaries as a CSV table with a fixed column order.
    
    Floats are written in shortest round-trip form, so reading the file back
    with ``float_precision="round_trip"`` reproduces them exactly.
    """
    frame = pd.DataFrame(list(rows), columns=list(columns))
    atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))
    return path
