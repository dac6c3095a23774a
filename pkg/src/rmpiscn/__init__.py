"""Incremental random-basis regression networks with a recursive pseudoinverse.

The main entry points are the trainers in :mod:`rmpiscn.trainers`, the
datasets in :mod:`rmpiscn.data` and the ``rmpiscn`` command line.
"""

__version__ = "0.1.0"
