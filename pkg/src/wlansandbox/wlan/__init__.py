from .channel import ChannelParams, McsTable, cca_busy, mcs_lookup, path_loss, rx_power, sinr
from .dcf import ThroughputReport, isolated_airtime_bound, simulate_scenario
from .scenario import SATURATED, Bss, MacParams, Node, Scenario, ScenarioError, canonical_scenario, load_scenario, save_scenario
