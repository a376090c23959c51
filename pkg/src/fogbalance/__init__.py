"""Fog network load balancing: discrete-event simulator, baselines and DDQL agents."""

from .ddql import DDQLAgent, DDQLPolicy, TrainSchedule, epsilon, run_training
from .engine import Engine, EpisodeResult, run_episode
from .metrics import DelayRecord, export_csv, mean_loop_delay, mean_waiting
from .policies import (DecisionContext, FastestPolicy, NearestPolicy, PlacementPolicy,
                       RandomPolicy, RoundRobinPolicy)
from .topology import Topology, betweenness, fastest_path, generate_topology
from .workload import AppSpec, Category, GenConfig, default_apps

__version__ = "0.1.0"
