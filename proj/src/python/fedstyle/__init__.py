# Copyright 2026 The fedstyle Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python access to the fedstyle simulator core."""

import json

from ._fedstyle import (
    FormatError,
    InvalidArgument,
    apply_style,
    default_config,
    export_world,
    extract_style,
    fft2,
    ifft2,
    kmeans,
    mean_style,
    normalize_config,
    select_clustering,
    silhouette,
)
from ._fedstyle import run_experiment as _run_experiment


def run_experiment(config, out, seeds=()):
    """Run one experiment and return its summary as a dict."""
    return json.loads(_run_experiment(config, str(out), list(seeds)))


__all__ = [
    "FormatError",
    "InvalidArgument",
    "apply_style",
    "default_config",
    "export_world",
    "extract_style",
    "fft2",
    "ifft2",
    "kmeans",
    "mean_style",
    "normalize_config",
    "run_experiment",
    "select_clustering",
    "silhouette",
]
