# encoding: utf-8
'''
Binary envelopes for cached operators, singular systems and field snapshots.

Layout, little-endian throughout:

    b"RGFO" | version u32 | kind u32 | provenance u64 | length u64 |
    payload (length bytes) | FNV-1a 64 of the payload u64
'''
import hashlib
import json
import logging
import os
import struct
import tempfile

import numpy as np
from numba import njit

from .errors import (ChecksumError, KindError, LengthError, MagicError, ProvenanceError,
                     StoreError, VersionError)

log = logging.getLogger(__name__)

MAGIC = b'RGFO'
VERSION = 1
KINDS = {'operator': 1, 'svd': 2, 'field': 3}
HEADER = struct.Struct('<4sIIQQ')
TRAILER = struct.Struct('<Q')
SUFFIX = '.rgfo'

FNV_OFFSET = np.uint64(0xcbf29ce484222325)
FNV_PRIME = np.uint64(0x100000001b3)


@njit(cache=True)
def _fnv1a(data, offset, prime):
    h = offset
    for byte in data:
        h = (h ^ np.uint64(byte)) * prime
    return h


def fnv1a_64(data):
    '''64-bit FNV-1a of a bytes-like object.'''
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    return int(_fnv1a(arr, FNV_OFFSET, FNV_PRIME))


def provenance_hash(provenance):
    '''64-bit digest of a JSON-serializable provenance record.'''
    text = json.dumps(provenance, sort_keys=True, separators=(',', ':'))
    digest = hashlib.blake2b(text.encode('utf8'), digest_size=8)
    return int.from_bytes(digest.digest(), 'little')


def _kind_code(kind):
    try:
        return KINDS[kind]
    except KeyError:
        raise KindError("Unknown envelope kind '{0}'.".format(kind))


def write_envelope(kind, provenance, payload, path):
    '''Write atomically: temp file in the target directory, fsync, rename.'''
    payload = bytes(payload)
    header = HEADER.pack(MAGIC, VERSION, _kind_code(kind), int(provenance), len(payload))
    trailer = TRAILER.pack(fnv1a_64(payload))
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    tmp = None
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix='.' + os.path.basename(path) + '.', dir=directory)
        with os.fdopen(fd, 'wb') as fh:
            fh.write(header)
            fh.write(payload)
            fh.write(trailer)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        tmp = None
    except OSError as e:
        raise StoreError("Cannot write {0}: {1}".format(path, e))
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
    log.debug("wrote %s envelope %s (%d bytes)", kind, path, len(payload))


def _read_bytes(path):
    try:
        with open(path, 'rb') as fh:
            return fh.read()
    except OSError as e:
        raise StoreError("Cannot read {0}: {1}".format(path, e))


def read_header(path):
    '''(version, kind name, provenance, payload length) of an envelope file.'''
    data = _read_bytes(path)
    if len(data) < HEADER.size:
        raise LengthError("{0} is shorter than an envelope header.".format(path))
    magic, version, kind, provenance, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MagicError("{0} is not an RGFO envelope.".format(path))
    names = {v: k for k, v in KINDS.items()}
    return version, names.get(kind, kind), provenance, length


def read_envelope(path, expected_kind, expected_provenance):
    '''Payload bytes, once magic, version, kind, provenance, length and checksum verify.'''
    data = _read_bytes(path)
    if len(data) < HEADER.size:
        raise LengthError("{0} is shorter than an envelope header.".format(path))
    magic, version, kind, provenance, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MagicError("{0} is not an RGFO envelope.".format(path))
    if version != VERSION:
        raise VersionError("{0} has format version {1}; supported is {2}.".format(
            path, version, VERSION))
    if kind != _kind_code(expected_kind):
        raise KindError("{0} holds kind {1}, expected '{2}'.".format(path, kind, expected_kind))
    if provenance != int(expected_provenance):
        raise ProvenanceError("{0} was built for provenance {1:016x}, expected "
                              "{2:016x}.".format(path, provenance, int(expected_provenance)))
    if len(data) != HEADER.size + length + TRAILER.size:
        raise LengthError("{0} declares {1} payload bytes but holds {2}.".format(
            path, length, len(data) - HEADER.size - TRAILER.size))
    payload = data[HEADER.size:HEADER.size + length]
    (checksum,) = TRAILER.unpack_from(data, HEADER.size + length)
    if checksum != fnv1a_64(payload):
        raise ChecksumError("{0} fails its checksum.".format(path))
    return payload


def list_cache(directory):
    '''(file name, kind, provenance, size) of every envelope in a directory.'''
    if not os.path.isdir(directory):
        return []
    out = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(SUFFIX):
            continue
        path = os.path.join(directory, name)
        try:
            _, kind, provenance, _ = read_header(path)
        except StoreError as e:
            log.warning("skipping unreadable cache entry %s: %s", name, e)
            continue
        out.append((name, kind, provenance, os.path.getsize(path)))
    return out


def remove_cache(directory):
    '''Delete every envelope in a directory; returns the number removed.'''
    removed = 0
    for name, _, _, _ in list_cache(directory):
        try:
            os.unlink(os.path.join(directory, name))
        except OSError as e:
            raise StoreError("Cannot remove {0}: {1}".format(name, e))
        removed += 1
    log.info("removed %d cache entries from %s", removed, directory)
    return removed
