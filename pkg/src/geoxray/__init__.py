"""Attenuated geodesic X-ray transform on simple conformal disks and its inversion."""
