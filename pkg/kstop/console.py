class Style:
    def apply(self, output):
        raise NotImplementedError()

    def write_escape_code(self, code, output):
        output.write('\x1b[{}m'.format(code))


class ClearStyle(Style):
    def apply(self, output):
        self.write_escape_code('0', output)


class BoldStyle(Style):
    def apply(self, output):
        self.write_escape_code('1', output)


class FaintStyle(Style):
    def apply(self, output):
        self.write_escape_code('2', output)


class ForegroundColourStyle(Style):
    def __init__(self, colour_code):
        self.colour_code = colour_code

    def apply(self, output):
        self.write_escape_code('38;5;{}'.format(self.colour_code), output)


class CompositeStyle(Style):
    def __init__(self, *styles):
        self.styles = styles

    def apply(self, output):
        for style in self.styles:
            if style is not None:
                style.apply(output)


HEADING_STYLE = CompositeStyle(BoldStyle(), ForegroundColourStyle(33))
KEY_STYLE = FaintStyle()


def format_value(value):
    if isinstance(value, float):
        return '{:.6g}'.format(value)

    return str(value)


class StatsWriter:
    """Writes headed blocks of aligned `key: value` rows, optionally coloured."""

    def __init__(self, output, colour=True):
        self.output = output
        self.colour = colour and hasattr(output, 'isatty') and output.isatty()
        self.style_stack = []

    def push_style(self, style):
        self.style_stack.append(style)

        if self.colour:
            style.apply(self.output)

    def pop_style(self):
        popped_style = self.style_stack.pop()

        if self.colour:
            ClearStyle().apply(self.output)

            for style in self.style_stack:
                style.apply(self.output)

        return popped_style

    def write_styled(self, text, style):
        self.push_style(style)
        self.output.write(text)
        self.pop_style()

    def heading(self, text):
        self.write_styled(text, HEADING_STYLE)
        self.output.write('\n')

    def rows(self, rows):
        rows = [(str(key), format_value(value)) for key, value in rows]
        width = max((len(key) for key, _ in rows), default=0)

        for key, value in rows:
            self.output.write('  ')
            self.write_styled('{}:'.format(key).ljust(width + 1), KEY_STYLE)
            self.output.write(' {}\n'.format(value))

    def block(self, title, rows):
        self.heading(title)
        self.rows(rows)
        self.output.flush()
