"""Shared test utilities: the finite-difference gradient oracle lives in
spectf.verify so unit tests and the verification suite use one
implementation and one set of tolerances."""

from spectf.verify import finite_difference_error as fd_max_rel_error

__all__ = ["fd_max_rel_error"]
