#!/usr/bin/env python3
"""
IDX dataset downloader.

This script handles:
1. Downloading the four MNIST IDX files from a configurable base URL
2. Telling gzip payloads from raw IDX payloads by their leading bytes
3. Decompressing and validating the IDX magic before saving to the data directory
"""

import os
import gzip
import json
import struct
import logging
import traceback

import requests

from config import DATA_DIR, MNIST_BASE_URL
from errors import DownloadFailed

MNIST_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

GZIP_MAGIC = b"\x1f\x8b"
IDX_MAGICS = (0x00000801, 0x00000803)

HEADERS = {
    'User-Agent': 'magtraj-fetch/1.0',
    'Accept': 'application/octet-stream,*/*;q=0.8',
}


def payload_kind(content):
    """'gzip', 'idx' or None, from the first bytes of a payload."""
    if content.startswith(GZIP_MAGIC):
        return "gzip"
    if len(content) >= 4 and struct.unpack(">I", content[:4])[0] in IDX_MAGICS:
        return "idx"
    return None


def decode_payload(content, name):
    kind = payload_kind(content)
    if kind == "gzip":
        try:
            content = gzip.decompress(content)
        except (OSError, EOFError) as e:
            raise DownloadFailed(f"{name}: corrupt gzip payload: {e}")
        logging.info(f"Decompressed {name}: {len(content)} bytes")
        kind = payload_kind(content)
    if kind != "idx":
        raise DownloadFailed(f"{name}: payload is neither gzip nor IDX (starts with {content[:4].hex()})")
    return content


def download_file(url, dest_path, timeout=60):
    """Fetch one file, decode it to raw IDX bytes and write it to dest_path."""
    logging.info(f"Sending GET request to {url}")
    try:
        response = requests.get(url, headers=HEADERS, allow_redirects=True, timeout=timeout)
    except requests.RequestException as e:
        logging.debug(traceback.format_exc())
        raise DownloadFailed(f"request to {url} failed: {e}")

    logging.info(f"Status code: {response.status_code}")
    logging.info(f"Content type: {response.headers.get('Content-Type')}")
    logging.info(f"Content length: {len(response.content)} bytes")
    logging.debug(f"Response headers: {json.dumps(dict(response.headers), indent=2)}")

    if response.status_code != 200:
        raise DownloadFailed(f"{url} returned status code {response.status_code}")

    content = decode_payload(response.content, os.path.basename(dest_path))
    with open(dest_path, 'wb') as f:
        f.write(content)
    logging.info(f"Successfully downloaded file to {dest_path}")
    return dest_path


def fetch_mnist(data_dir=None, base_url=None, force=False):
    """Download any missing MNIST IDX files. Returns the list of local paths."""
    data_dir = data_dir or DATA_DIR
    base_url = base_url or MNIST_BASE_URL
    os.makedirs(data_dir, exist_ok=True)

    paths = []
    for name in MNIST_FILES:
        dest_path = os.path.join(data_dir, name)
        if os.path.exists(dest_path) and not force:
            logging.info(f"{dest_path} already exists, skipping (use --force to download again)")
        else:
            download_file(base_url.rstrip("/") + "/" + name + ".gz", dest_path)
        paths.append(dest_path)
    return paths
