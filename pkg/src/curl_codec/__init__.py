"""Spherical-harmonics compression and any-density reconstruction of spinning LiDAR scans."""
