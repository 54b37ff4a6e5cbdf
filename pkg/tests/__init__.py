"""Tests for betaboost."""
