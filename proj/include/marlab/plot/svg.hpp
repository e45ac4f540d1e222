#pragma once

#include "marlab/core/mat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace marlab
{

// Tiny hand-rolled SVG charts. Every plot is written twice: the .svg picture
// and a .csv table with the underlying numbers.

struct Series
{
	std::string label;
	std::vector<double> x;
	std::vector<double> y;
	std::vector<double> lo; // optional confidence band, same length as y
	std::vector<double> hi;
};

struct LinePlot
{
	std::string title;
	std::string xlabel;
	std::string ylabel;
	std::vector<Series> series;
};

struct Bar
{
	std::string label;
	double value = 0.0;
	double lo = 0.0; // whisker; set equal to value to hide
	double hi = 0.0;
};

struct BarPlot
{
	std::string title;
	std::string ylabel;
	std::vector<Bar> bars;
};

namespace plot_detail
{

inline std::string xml_escape(const std::string& s)
{
	std::string out;
	out.reserve(s.size());
	for (char c : s)
	{
		switch (c)
		{
			case '&': out += "&amp;"; break;
			case '<': out += "&lt;"; break;
			case '>': out += "&gt;"; break;
			case '"': out += "&quot;"; break;
			default: out += c;
		}
	}
	return out;
}

inline std::string fmt(double v)
{
	char buf[64];
	std::snprintf(buf, sizeof(buf), "%g", v);
	return buf;
}

inline const char* palette(size_t i)
{
	static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
																 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
	return colors[i % (sizeof(colors) / sizeof(colors[0]))];
}

// tick step of the form {1,2,5} * 10^k giving a handful of ticks
inline double nice_step(double range, int target_ticks)
{
	if (!(range > 0.0) || !std::isfinite(range)) { return 1.0; }
	double raw = range / std::max(1, target_ticks);
	double mag = std::pow(10.0, std::floor(std::log10(raw)));
	double frac = raw / mag;
	double step = 10.0;
	if (frac <= 1.0) { step = 1.0; }
	else if (frac <= 2.0) { step = 2.0; }
	else if (frac <= 5.0) { step = 5.0; }
	return step * mag;
}

inline std::vector<double> ticks_for(double lo, double hi, int target)
{
	std::vector<double> out;
	double step = nice_step(hi - lo, target);
	double first = std::ceil(lo / step) * step;
	for (double v = first; v <= hi + 1e-9 * step; v += step)
	{
		out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
	}
	return out;
}

struct Frame
{
	double width = 640, height = 420;
	double ml = 72, mr = 20, mt = 44, mb = 52;
	double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

	double px(double x) const { return ml + (x - x0) / (x1 - x0) * (width - ml - mr); }
	double py(double y) const { return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb); }
};

inline void open_svg(std::ostringstream& os, const Frame& f, const std::string& title)
{
	os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
		 << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height << "\">\n";
	os << "<rect width=\"" << f.width << "\" height=\"" << f.height << "\" fill=\"white\"/>\n";
	os << "<text x=\"" << f.width / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
		 << "text-anchor=\"middle\" font-weight=\"bold\">" << xml_escape(title) << "</text>\n";
}

inline void draw_axes(std::ostringstream& os, const Frame& f, const std::string& xlabel,
											const std::string& ylabel, bool x_ticks = true)
{
	double left = f.ml, right = f.width - f.mr, top = f.mt, bottom = f.height - f.mb;
	os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
		 << bottom << "\" stroke=\"black\"/>\n";
	os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
		 << "\" stroke=\"black\"/>\n";
	if (x_ticks)
	{
		for (double v : ticks_for(f.x0, f.x1, 6))
		{
			double X = f.px(v);
			os << "<line x1=\"" << X << "\" y1=\"" << bottom << "\" x2=\"" << X << "\" y2=\""
				 << bottom + 5 << "\" stroke=\"black\"/>\n";
			os << "<text x=\"" << X << "\" y=\"" << bottom + 20
				 << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << fmt(v)
				 << "</text>\n";
		}
	}
	for (double v : ticks_for(f.y0, f.y1, 6))
	{
		double Y = f.py(v);
		os << "<line x1=\"" << left - 5 << "\" y1=\"" << Y << "\" x2=\"" << left << "\" y2=\"" << Y
			 << "\" stroke=\"black\"/>\n";
		os << "<line x1=\"" << left << "\" y1=\"" << Y << "\" x2=\"" << right << "\" y2=\"" << Y
			 << "\" stroke=\"#dddddd\"/>\n";
		os << "<text x=\"" << left - 9 << "\" y=\"" << Y + 4
			 << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt(v)
			 << "</text>\n";
	}
	os << "<text x=\"" << (left + right) / 2 << "\" y=\"" << f.height - 12
		 << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
		 << xml_escape(xlabel) << "</text>\n";
	os << "<text x=\"16\" y=\"" << (top + bottom) / 2
		 << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 "
		 << 16 << " " << (top + bottom) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
}

} // namespace plot_detail

inline std::string render_svg(const LinePlot& plot)
{
	using namespace plot_detail;
	Frame f;
	double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
	bool any = false;
	for (const auto& s : plot.series)
	{
		for (size_t i = 0; i < s.x.size(); ++i)
		{
			double y_lo = s.lo.size() == s.y.size() ? s.lo[i] : s.y[i];
			double y_hi = s.hi.size() == s.y.size() ? s.hi[i] : s.y[i];
			if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) { continue; }
			if (!any)
			{
				xlo = xhi = s.x[i];
				ylo = y_lo;
				yhi = y_hi;
				any = true;
			}
			xlo = std::min(xlo, s.x[i]);
			xhi = std::max(xhi, s.x[i]);
			ylo = std::min(ylo, y_lo);
			yhi = std::max(yhi, y_hi);
		}
	}
	if (!any) { xlo = ylo = 0; xhi = yhi = 1; }
	if (xhi <= xlo) { xhi = xlo + 1; }
	if (yhi <= ylo) { yhi = ylo + 1; }
	double pad = 0.05 * (yhi - ylo);
	f.x0 = xlo;
	f.x1 = xhi;
	f.y0 = ylo - pad;
	f.y1 = yhi + pad;

	std::ostringstream os;
	open_svg(os, f, plot.title);
	draw_axes(os, f, plot.xlabel, plot.ylabel);

	for (size_t si = 0; si < plot.series.size(); ++si)
	{
		const auto& s = plot.series[si];
		const char* color = palette(si);
		if (s.lo.size() == s.y.size() && s.hi.size() == s.y.size() && !s.y.empty())
		{
			os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
			for (size_t i = 0; i < s.x.size(); ++i) { os << f.px(s.x[i]) << "," << f.py(s.hi[i]) << " "; }
			for (size_t i = s.x.size(); i-- > 0;) { os << f.px(s.x[i]) << "," << f.py(s.lo[i]) << " "; }
			os << "\"/>\n";
		}
		os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
		for (size_t i = 0; i < s.x.size(); ++i) { os << f.px(s.x[i]) << "," << f.py(s.y[i]) << " "; }
		os << "\"/>\n";
		double lx = f.width - f.mr - 150, ly = f.mt + 16 + 16 * double(si);
		os << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\"" << lx + 24 << "\" y2=\""
			 << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
		os << "<text x=\"" << lx + 30 << "\" y=\"" << ly
			 << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.label) << "</text>\n";
	}
	os << "</svg>\n";
	return os.str();
}

inline std::string render_svg(const BarPlot& plot)
{
	using namespace plot_detail;
	Frame f;
	double ylo = 0.0, yhi = 0.0;
	for (const auto& b : plot.bars)
	{
		ylo = std::min({ylo, b.value, b.lo});
		yhi = std::max({yhi, b.value, b.hi});
	}
	if (yhi <= ylo) { yhi = ylo + 1; }
	f.x0 = 0;
	f.x1 = double(plot.bars.size());
	f.y0 = ylo;
	f.y1 = yhi + 0.08 * (yhi - ylo);

	std::ostringstream os;
	open_svg(os, f, plot.title);
	draw_axes(os, f, "", plot.ylabel, false);
	double base = f.py(std::max(0.0, f.y0));
	for (size_t i = 0; i < plot.bars.size(); ++i)
	{
		const auto& b = plot.bars[i];
		double cx = f.px(double(i) + 0.5);
		double half = 0.32 * (f.px(1) - f.px(0));
		double top = f.py(b.value);
		os << "<rect x=\"" << cx - half << "\" y=\"" << std::min(top, base) << "\" width=\""
			 << 2 * half << "\" height=\"" << std::abs(base - top) << "\" fill=\"" << palette(i)
			 << "\" fill-opacity=\"0.8\"/>\n";
		if (b.hi > b.lo)
		{
			os << "<line x1=\"" << cx << "\" y1=\"" << f.py(b.lo) << "\" x2=\"" << cx << "\" y2=\""
				 << f.py(b.hi) << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
			os << "<line x1=\"" << cx - 6 << "\" y1=\"" << f.py(b.lo) << "\" x2=\"" << cx + 6
				 << "\" y2=\"" << f.py(b.lo) << "\" stroke=\"black\"/>\n";
			os << "<line x1=\"" << cx - 6 << "\" y1=\"" << f.py(b.hi) << "\" x2=\"" << cx + 6
				 << "\" y2=\"" << f.py(b.hi) << "\" stroke=\"black\"/>\n";
		}
		os << "<text x=\"" << cx << "\" y=\"" << f.height - f.mb + 18
			 << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
			 << xml_escape(b.label) << "</text>\n";
	}
	os << "</svg>\n";
	return os.str();
}

inline std::string csv_table(const LinePlot& plot)
{
	std::ostringstream os;
	os << "series,x,y,lo,hi\n";
	for (const auto& s : plot.series)
	{
		for (size_t i = 0; i < s.x.size(); ++i)
		{
			double lo = s.lo.size() == s.y.size() ? s.lo[i] : s.y[i];
			double hi = s.hi.size() == s.y.size() ? s.hi[i] : s.y[i];
			os << s.label << "," << plot_detail::fmt(s.x[i]) << "," << plot_detail::fmt(s.y[i]) << ","
				 << plot_detail::fmt(lo) << "," << plot_detail::fmt(hi) << "\n";
		}
	}
	return os.str();
}

inline std::string csv_table(const BarPlot& plot)
{
	std::ostringstream os;
	os << "label,value,lo,hi\n";
	for (const auto& b : plot.bars)
	{
		os << b.label << "," << plot_detail::fmt(b.value) << "," << plot_detail::fmt(b.lo) << ","
			 << plot_detail::fmt(b.hi) << "\n";
	}
	return os.str();
}

// writes <base>.svg and <base>.csv
template <class P>
void write_plot(const std::string& base, const P& plot)
{
	{
		std::ofstream os(base + ".svg", std::ios::trunc);
		MARLAB_CHECK(os.good(), "write_plot: cannot open " + base + ".svg");
		os << render_svg(plot);
	}
	{
		std::ofstream os(base + ".csv", std::ios::trunc);
		MARLAB_CHECK(os.good(), "write_plot: cannot open " + base + ".csv");
		os << csv_table(plot);
	}
}

} // namespace marlab
