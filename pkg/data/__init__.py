from .scenario_catalog import scenario_catalog
