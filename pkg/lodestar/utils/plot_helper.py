"""Plot helpers shared by the reporting parts of lodestar."""

import plotnine as p9


def _default_plot_theme(group_count=10):
    """Theme of the per-group bar charts; labels are rotated once there are more than four groups."""
    rotation = 45 if group_count > 4 else 0
    return p9.theme(
        axis_text_x=p9.element_text(rotation=rotation, ha='right' if rotation else 'center'),
        axis_title_x=p9.element_blank(),
        axis_title_y=p9.element_text(margin={'r': 12}),
        figure_size=(max(4.0, 0.6 * group_count), 3.5),
    )
