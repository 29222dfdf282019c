"""Reputation, visibility and risk-taking: belief updates, sign tests and panel tools."""

from __future__ import annotations

__version__ = "0.1.0"
