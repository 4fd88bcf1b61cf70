"""Test suite for Proactive Security Orchestrator."""

