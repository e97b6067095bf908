"""Hybrid automata"""