"""CO-RADS grader: COVID-19 suspicion grading from chest CT with 2D and 3D CNNs."""

__version__ = "0.1.0"
