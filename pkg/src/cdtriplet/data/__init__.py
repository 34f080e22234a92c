from .dataset import DOMAINS, LABELS, Dataset, split
from .io import read_dataset, read_pgm, write_dataset, write_pgm
from .synthetic import (DEFAULT_COUNTS, DEFAULT_DEFECT, DEFAULT_SOURCE, DEFAULT_TARGET, DefectSpec, DomainSpec,
                        SyntheticConfig, generate_pair)

__all__ = ["DOMAINS", "LABELS", "Dataset", "split", "read_dataset", "read_pgm", "write_dataset", "write_pgm",
           "DEFAULT_COUNTS", "DEFAULT_DEFECT", "DEFAULT_SOURCE", "DEFAULT_TARGET", "DefectSpec", "DomainSpec",
           "SyntheticConfig", "generate_pair"]
