"""
Sites, files and copy placement.

The database's pages are cut into num_sites x files_per_site contiguous
files. File f has its primary copy at site f % num_sites, which keeps the
per-site primary page counts within one page of each other.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

from engine import RngStream
from errors import TopologyError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FileMap:
    """Immutable layout: page ranges per file and copy sites per file"""

    num_sites: int
    file_ranges: Tuple[Tuple[int, int], ...]   # [start, stop) page ids
    copies: Tuple[Tuple[int, ...], ...]        # primary first, then replicas

    @property
    def num_files(self):
        return len(self.file_ranges)

    @property
    def dbsize(self):
        return sum(stop - start for start, stop in self.file_ranges)

    def pages_of(self, file_id):
        self._check_file(file_id)
        start, stop = self.file_ranges[file_id]
        return range(start, stop)

    def primary_site(self, file_id):
        self._check_file(file_id)
        return self.copies[file_id][0]

    def site_pages(self):
        """Primary pages per site (each page counted once)"""
        counts = [0] * self.num_sites
        for f, (start, stop) in enumerate(self.file_ranges):
            counts[self.copies[f][0]] += stop - start
        return counts

    def resident_pages(self):
        """Pages held per site, replicas included"""
        counts = [0] * self.num_sites
        for f, (start, stop) in enumerate(self.file_ranges):
            for site in self.copies[f]:
                counts[site] += stop - start
        return counts

    def holds(self, site, file_id):
        self._check_file(file_id)
        return site in self.copies[file_id]

    def _check_file(self, file_id):
        if not 0 <= file_id < len(self.file_ranges):
            raise TopologyError(f"unknown file id {file_id} (have {len(self.file_ranges)} files)")


def place_files(dbsize, num_sites, files_per_site, replication=1,
                rng: Optional[RngStream] = None) -> FileMap:
    """Partition dbsize pages into files and place their copies"""
    if num_sites < 1:
        raise TopologyError(f"num_sites must be >= 1, got {num_sites}")
    if dbsize < num_sites:
        raise TopologyError(f"dbsize {dbsize} smaller than num_sites {num_sites}")
    if files_per_site < 1:
        raise TopologyError(f"files_per_site must be >= 1, got {files_per_site}")
    if replication < 1:
        raise TopologyError(f"replication must be >= 1, got {replication}")
    if num_sites == 1:
        if replication != 1:
            logger.debug(f"Centralized layout: replication {replication} forced to 1")
        replication = 1
    elif replication > num_sites:
        raise TopologyError(f"replication {replication} exceeds num_sites {num_sites}")
    if replication > 1 and rng is None:
        raise TopologyError("replica placement needs a random stream")

    # every file must hold at least one page
    per_site = min(files_per_site, dbsize // num_sites)
    num_files = num_sites * per_site
    base, extra = divmod(dbsize, num_files)

    ranges = []
    copies = []
    start = 0
    for f in range(num_files):
        size = base + (1 if f < extra else 0)
        ranges.append((start, start + size))
        start += size
        primary = f % num_sites
        if replication > 1:
            others = [s for s in range(num_sites) if s != primary]
            replicas = rng.sample(others, replication - 1)
            copies.append((primary, *replicas))
        else:
            copies.append((primary,))

    fmap = FileMap(num_sites=num_sites, file_ranges=tuple(ranges), copies=tuple(copies))
    logger.debug(
        f"Placed {num_files} files over {num_sites} sites "
        f"(dbsize={dbsize}, replication={replication})"
    )
    return fmap


def select_execution_sites(origin, files: Sequence[int], fmap: FileMap,
                           rng: RngStream):
    """Execution site for each file, in file order.

    A file with a copy at the origin runs there; otherwise a site is drawn
    uniformly from the file's copy sites.
    """
    chosen = []
    for f in files:
        fmap._check_file(f)
        sites = fmap.copies[f]
        if origin in sites:
            chosen.append(origin)
        elif len(sites) == 1:
            chosen.append(sites[0])
        else:
            chosen.append(sites[rng.integers(0, len(sites) - 1)])
    return chosen


def cohort_sites(chosen):
    """One cohort per distinct execution site, ordered by site id"""
    return sorted(set(chosen))
