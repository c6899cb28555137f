"""
Toolkit exposing the descent simulator, the co-state pipeline and the experiments as agent tools.

The following class is available:

    * :class `CoStateFusionToolkit`
"""
import logging
from typing import List, Optional, Union

from langchain_core.tools import BaseTool, BaseToolkit

from costate_fusion.config import RunConfig
from costate_fusion.tools.descent_tools import SimulateDescent
from costate_fusion.tools.experiment_tools import CalibrateGenerator, CompareDetectors, MpcDemo
from costate_fusion.tools.pipeline_tools import RunCoStatePipeline, RunEkfBaseline

logger = logging.getLogger(__name__)


class CoStateFusionToolkit(BaseToolkit):
    """
    Toolkit for simulating descents and monitoring their risk.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration handed to every tool. Defaults to the built-in configuration.
    used_tools : list, optional
        List of tools to use. If None or 'all', all tools are used. Default to None.
    return_direct : bool or dict, optional
        Either one flag for all tools or a mapping from tool name to flag. Default to None.

    Examples
    --------
    >>> from costate_fusion.tools import CoStateFusionToolkit

    >>> tools = CoStateFusionToolkit(used_tools=["simulate_descent", "run_costate_pipeline"]).get_tools()
    >>> [tool.name for tool in tools]
    ['simulate_descent', 'run_costate_pipeline']
    """
    run_config: Optional[RunConfig] = None
    used_tools: Optional[list] = None
    default_tools: List[BaseTool] = None

    def __init__(self, run_config: Optional[RunConfig] = None, used_tools=None, return_direct=None):
        super().__init__(run_config=run_config)
        self.default_tools = [
            SimulateDescent(run_config=self.run_config),
            RunCoStatePipeline(run_config=self.run_config),
            RunEkfBaseline(run_config=self.run_config),
            CompareDetectors(run_config=self.run_config),
            CalibrateGenerator(run_config=self.run_config),
            MpcDemo(run_config=self.run_config)
        ]
        if isinstance(return_direct, dict):
            for tool in self.default_tools:
                if tool.name in return_direct:
                    tool.return_direct = return_direct[tool.name]
        if isinstance(return_direct, bool):
            for tool in self.default_tools:
                tool.return_direct = return_direct
        if used_tools is None or used_tools == "all":
            self.used_tools = list(self.default_tools)
        else:
            if isinstance(used_tools, str):
                used_tools = [used_tools]
            self.used_tools = [tool for tool in self.default_tools if tool.name in used_tools]
            unknown = set(used_tools) - {tool.name for tool in self.used_tools}
            if unknown:
                logger.warning("Unknown tools ignored: %s", sorted(unknown))

    def add_custom_tool(self, tool: BaseTool):
        """
        Add a custom tool to the toolkit.

        Parameters
        ----------
        tool : BaseTool
            Custom tool to add.
        """
        self.used_tools.append(tool)

    def delete_tool(self, tool_name: str):
        """
        Delete a tool from the toolkit.

        Parameters
        ----------
        tool_name : str
            Name of the tool to delete.
        """
        for tool in self.used_tools:
            if tool.name == tool_name:
                self.used_tools.remove(tool)
                break

    def reset_tools(self, tools: Optional[List[Union[BaseTool, str]]] = None):
        """
        Reset the toolkit's tools.

        Parameters
        ----------
        tools : list of BaseTool or list of str, optional
            If provided, the toolkit will only contain these tools. Strings are matched
            by name against the default tools. If None, reset to default tools.
        """
        if tools is None:
            self.used_tools = list(self.default_tools)
            return
        by_name = {tool.name: tool for tool in self.default_tools}
        new_tools: List[BaseTool] = []
        for t in tools:
            if isinstance(t, BaseTool):
                new_tools.append(t)
            elif isinstance(t, str) and t in by_name:
                new_tools.append(by_name[t])
        self.used_tools = new_tools

    def get_tools(self) -> List[BaseTool]:
        """
        Get the tools in the toolkit.
        """
        return self.used_tools
