"""Tests for cascade_nerf."""
