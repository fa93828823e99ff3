"""Transfer-matrix simulation and analysis of open Fabry-Perot microcavities with membranes."""

__version__ = "0.1.0"
