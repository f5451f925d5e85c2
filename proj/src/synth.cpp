#include "lifelog/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "lifelog/error.hpp"
#include "lifelog/rng.hpp"
#include "lifelog/text_io.hpp"

namespace lifelog {

namespace {

constexpr int kMinutesPerDay = 24 * 60;

std::string hhmm(int minute) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minute / 60, minute % 60);
  return buf;
}

std::string record_id(const std::string& user, const Date& date, int minute) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "-%04d%02d%02d-%02d%02d", date.year, date.month, date.day,
                minute / 60, minute % 60);
  return user + buf;
}

bool eligible(const ClassProfile& c, int day_index, int weekday) {
  return day_index >= c.first_day && ((c.weekdays >> weekday) & 1u);
}

int clamp_byte(int v) { return std::clamp(v, 0, 255); }

}  // namespace

void SynthConfig::validate() const {
  if (classes.empty()) throw ValidationError("synth: at least one class profile is required");
  if (days < 1) throw ValidationError("synth: days must be >= 1");
  if (interval_minutes < 1) throw ValidationError("synth: interval must be >= 1 minute");
  if (capture_start < 0 || capture_end > kMinutesPerDay || capture_start >= capture_end)
    throw ValidationError("synth: capture window must satisfy 0 <= start < end <= 24:00");
  if (image_size < 2) throw ValidationError("synth: image size must be >= 2");
  if (block_min < 1 || block_max < block_min)
    throw ValidationError("synth: block lengths must satisfy 1 <= min <= max");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (!seen.insert(c.label).second) throw ValidationError("synth: duplicate class " + c.label);
    if (c.window_start < 0 || c.window_end > kMinutesPerDay || c.window_start >= c.window_end)
      throw ValidationError("synth: class " + c.label + " has an empty or invalid time window");
    if (!(c.frequency >= 0.0)) throw ValidationError("synth: class " + c.label + " has a negative frequency");
    if (c.fixed && c.frequency > 1.0)
      throw ValidationError("synth: fixed class " + c.label + " needs a frequency in [0, 1]");
    if ((c.weekdays & 0x7f) == 0) throw ValidationError("synth: class " + c.label + " has no weekdays");
    if (c.first_day < 0) throw ValidationError("synth: class " + c.label + " has a negative first day");
  }
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      const auto& x = classes[a];
      const auto& y = classes[b];
      if (!x.fixed || !y.fixed || (x.weekdays & y.weekdays & 0x7f) == 0) continue;
      if (x.window_start < y.window_end && y.window_start < x.window_end) {
        throw ValidationError("synth: unsatisfiable schedule: fixed classes " + x.label + " (" +
                              hhmm(x.window_start) + "-" + hhmm(x.window_end) + ") and " + y.label +
                              " (" + hhmm(y.window_start) + "-" + hhmm(y.window_end) +
                              ") overlap on a shared weekday");
      }
    }
  }
  // ActivityLabelSet validates the names themselves.
  (void)label_set();
}

ActivityLabelSet SynthConfig::label_set() const {
  std::vector<std::string> names;
  names.reserve(classes.size());
  for (const auto& c : classes) names.push_back(c.label);
  return ActivityLabelSet(std::move(names));
}

SyntheticLifelog generate_lifelog(const SynthConfig& config) {
  config.validate();
  SyntheticLifelog out;
  out.config = config;
  out.dataset.label_set = config.label_set();
  out.dataset.user_id = config.user_id;

  std::vector<std::size_t> flexible;
  for (std::size_t c = 0; c < config.classes.size(); ++c)
    if (!config.classes[c].fixed) flexible.push_back(c);

  const int span = config.capture_end - config.capture_start;
  for (int d = 0; d < config.days; ++d) {
    const Date date = Date::from_serial(config.start_date.serial() + d);
    const int wd = date.weekday();
    Rng rng = make_rng({config.seed, 0x5c4edu, static_cast<std::uint64_t>(d)});
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Minute-level schedule over the capture window; -1 = no label.
    std::vector<int> slot(static_cast<std::size_t>(span), -1);
    std::vector<bool> fixed_taken(slot.size(), false);
    for (std::size_t c = 0; c < config.classes.size(); ++c) {
      const auto& p = config.classes[c];
      if (!p.fixed) continue;
      const double u = unit(rng);  // drawn for every fixed class to keep streams aligned
      if (!eligible(p, d, wd) || u >= p.frequency) continue;
      const int lo = std::max(p.window_start, config.capture_start);
      const int hi = std::min(p.window_end, config.capture_end);
      for (int m = lo; m < hi; ++m) {
        slot[m - config.capture_start] = static_cast<int>(c);
        fixed_taken[m - config.capture_start] = true;
      }
    }

    std::uniform_int_distribution<int> block_len(config.block_min, config.block_max);
    int t = 0;
    while (t < span) {
      if (fixed_taken[t]) {
        ++t;
        continue;
      }
      int end = std::min(span, t + block_len(rng));
      for (int m = t + 1; m < end; ++m) {
        if (fixed_taken[m]) {
          end = m;
          break;
        }
      }
      const int minute = config.capture_start + t;
      double total = 0.0;
      std::vector<double> weights(flexible.size(), 0.0);
      for (std::size_t i = 0; i < flexible.size(); ++i) {
        const auto& p = config.classes[flexible[i]];
        if (eligible(p, d, wd) && minute >= p.window_start && minute < p.window_end) {
          weights[i] = p.frequency;
          total += p.frequency;
        }
      }
      const double u = unit(rng) * total;
      int chosen = -1;
      if (total > 0.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < flexible.size(); ++i) {
          if (weights[i] <= 0.0) continue;
          acc += weights[i];
          chosen = static_cast<int>(flexible[i]);
          if (u < acc) break;
        }
      }
      for (int m = t; m < end; ++m) slot[m] = chosen;
      t = end;
    }

    for (int m = config.capture_start; m < config.capture_end; m += config.interval_minutes) {
      ImageRecord r;
      r.id = record_id(config.user_id, date, m);
      r.path = "images/" + r.id + ".ppm";
      r.timestamp = Timestamp{date, m / 60, m % 60, 0};
      const int c = slot[m - config.capture_start];
      if (c >= 0) r.label = config.classes[c].label;
      r.user_id = config.user_id;
      out.dataset.records.push_back(std::move(r));
    }
  }
  return out;
}

RgbImage render_image(const SynthConfig& config, const ImageRecord& record) {
  Rng rng = make_rng({config.seed, 0x1a6eu, stable_hash(record.id)});
  const Palette* palette = &config.shared_palette;
  if (record.label) {
    const auto it = std::find_if(config.classes.begin(), config.classes.end(),
                                 [&](const ClassProfile& c) { return c.label == *record.label; });
    if (it == config.classes.end())
      throw ValidationError("synth: record " + record.id + " has unknown label " + *record.label);
    if (it->informative_palette) {
      palette = &it->palette;
    } else {
      std::vector<const Palette*> pool;
      for (const auto& c : config.classes)
        if (c.informative_palette) pool.push_back(&c.palette);
      if (!pool.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        palette = pool[pick(rng)];
      }
    }
  }

  std::array<int, 3> shift{0, 0, 0};
  if (palette->jitter > 0) {
    std::uniform_int_distribution<int> j(-palette->jitter, palette->jitter);
    for (int& s : shift) s = j(rng);
  }
  std::uniform_int_distribution<int> noise(-palette->noise, palette->noise);
  const int n = config.image_size;
  RgbImage img(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const bool alt = palette->pattern == PalettePattern::quadrants && ((x < n / 2) != (y < n / 2));
      const auto& base = alt ? palette->alt_color : palette->color;
      std::uint8_t* px = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const int v = base[ch] + shift[ch] + (palette->noise > 0 ? noise(rng) : 0);
        px[ch] = static_cast<std::uint8_t>(clamp_byte(v));
      }
    }
  }
  return img;
}

void write_lifelog(const SyntheticLifelog& lifelog, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory / "images");
  for (const auto& r : lifelog.dataset.records) write_ppm(render_image(lifelog.config, r), directory / r.path);
  save_manifest(lifelog.dataset, directory / "manifest.tsv");
}

namespace {

constexpr std::uint8_t kWeekdays = 0x1f;  // Mon-Fri
constexpr std::uint8_t kEveryDay = 0x7f;

int at(int h, int m) { return h * 60 + m; }

ClassProfile fixed_class(std::string label, int start, int end, std::uint8_t days) {
  ClassProfile c;
  c.label = std::move(label);
  c.window_start = start;
  c.window_end = end;
  c.weekdays = days;
  c.fixed = true;
  c.frequency = 1.0;
  c.informative_palette = false;
  return c;
}

ClassProfile flexible_class(std::string label, int start, int end, std::uint8_t days, double weight,
                            Palette palette) {
  ClassProfile c;
  c.label = std::move(label);
  c.window_start = start;
  c.window_end = end;
  c.weekdays = days;
  c.frequency = weight;
  c.palette = palette;
  return c;
}

Palette flat(int r, int g, int b, int noise = 20, int jitter = 18) {
  Palette p;
  p.color = {r, g, b};
  p.alt_color = p.color;
  p.noise = noise;
  p.jitter = jitter;
  return p;
}

Palette quads(std::array<int, 3> a, std::array<int, 3> b, int noise = 20, int jitter = 18) {
  Palette p;
  p.color = a;
  p.alt_color = b;
  p.noise = noise;
  p.jitter = jitter;
  p.pattern = PalettePattern::quadrants;
  return p;
}

void order_like(SynthConfig& config, const ActivityLabelSet& labels) {
  std::vector<ClassProfile> ordered;
  for (const auto& name : labels.names()) {
    const auto it = std::find_if(config.classes.begin(), config.classes.end(),
                                 [&](const ClassProfile& c) { return c.label == name; });
    if (it != config.classes.end()) ordered.push_back(*it);
  }
  config.classes = std::move(ordered);
}

}  // namespace

SynthConfig standard_config(std::uint64_t seed, int days) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.days = days;
  cfg.user_id = "u1";
  cfg.start_date = Date{2024, 1, 1};  // a Monday

  auto& cl = cfg.classes;
  // Routine activities: the timestamp decides them, the scene does not.
  cl.push_back(fixed_class("Driving", at(8, 0), at(8, 25), kWeekdays));
  cl.push_back(fixed_class("Meeting", at(10, 0), at(10, 55), 0x15));      // Mon, Wed, Fri
  cl.push_back(fixed_class("Presentation", at(14, 0), at(14, 50), 0x0a)); // Tue, Thu
  cl.push_back(fixed_class("Exercising", at(9, 0), at(9, 35), 0x60));     // weekend
  cl.push_back(fixed_class("Biking", at(17, 30), at(17, 58), 0x0e));      // Tue-Thu
  cl.push_back(fixed_class("Resting", at(13, 0), at(13, 13), 0x40));      // Sun
  cl.push_back(fixed_class("Chatting", at(16, 0), at(16, 14), 0x10));     // Fri
  cl.push_back(fixed_class("Shopping", at(11, 0), at(12, 15), 0x20));     // Sat
  cl.push_back(fixed_class("Hygiene", at(19, 35), at(20, 0), kEveryDay));

  // Scene-driven activities.
  cl.push_back(flexible_class("Working", at(8, 30), at(17, 30), kWeekdays, 40.0, flat(70, 90, 160)));
  cl.push_back(flexible_class("Family", at(8, 0), at(20, 0), kEveryDay, 5.0, flat(200, 150, 100)));
  cl.push_back(flexible_class("Eating", at(11, 0), at(20, 0), kEveryDay, 4.8, flat(170, 50, 40)));
  cl.push_back(flexible_class("Dogs", at(8, 0), at(20, 0), kEveryDay, 0.9, flat(80, 150, 60)));
  cl.push_back(flexible_class("Socializing", at(12, 0), at(20, 0), kEveryDay, 0.9, flat(210, 80, 170)));
  cl.push_back(flexible_class("Cooking", at(16, 0), at(20, 0), kEveryDay, 1.5, flat(230, 210, 60)));
  // Same histogram, different layout.
  cl.push_back(flexible_class("Reading", at(8, 0), at(20, 0), kEveryDay, 1.1,
                              quads({40, 40, 40}, {215, 215, 215})));
  cl.push_back(flexible_class("TV", at(15, 0), at(20, 0), kEveryDay, 2.8,
                              quads({215, 215, 215}, {40, 40, 40})));
  // Same mean color, different texture.
  cl.push_back(flexible_class("Chores", at(8, 0), at(20, 0), kEveryDay, 0.45, flat(128, 128, 128, 12, 10)));
  cl.push_back(flexible_class("Cleaning", at(8, 0), at(20, 0), kEveryDay, 0.4, flat(128, 128, 128, 115, 10)));

  cfg.shared_palette = flat(128, 128, 128, 40, 20);
  order_like(cfg, ActivityLabelSet::canonical());
  return cfg;
}

SynthConfig learning_curve_config(std::uint64_t seed, int weeks) {
  SynthConfig cfg = standard_config(seed, 7 * weeks);
  cfg.interval_minutes = 2;
  for (auto& c : cfg.classes) {
    if (c.label == "Eating" || c.label == "Meeting" || c.label == "Shopping" || c.label == "Dogs")
      c.first_day = 14;
  }
  return cfg;
}

SynthConfig metadata_only_config(std::uint64_t seed, int days) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.days = days;
  cfg.user_id = "m1";
  cfg.start_date = Date{2024, 1, 1};
  cfg.shared_palette = flat(128, 128, 128, 40, 20);
  const char* names[] = {"Working", "Eating", "Reading", "Family", "Cooking", "Shopping"};
  const int n = static_cast<int>(std::size(names));
  const int step = (cfg.capture_end - cfg.capture_start) / n;
  for (int i = 0; i < n; ++i) {
    const int start = cfg.capture_start + i * step;
    const int end = i + 1 == n ? cfg.capture_end : start + step;
    cfg.classes.push_back(fixed_class(names[i], start, end, kEveryDay));
  }
  return cfg;
}

SynthConfig volunteer_config(std::uint64_t seed, int days) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.days = days;
  cfg.user_id = "u2";
  cfg.start_date = Date{2024, 3, 5};  // a Tuesday
  auto& cl = cfg.classes;
  auto fixed_scene = [](std::string label, int s, int e, Palette p) {
    ClassProfile c = fixed_class(std::move(label), s, e, kEveryDay);
    c.informative_palette = true;
    c.palette = p;
    return c;
  };
  cl.push_back(fixed_scene("Walking", at(8, 0), at(8, 25), flat(100, 185, 205)));
  cl.push_back(fixed_scene("Working", at(8, 30), at(12, 0), flat(85, 100, 150)));
  cl.push_back(fixed_scene("Eating", at(12, 0), at(12, 50), flat(95, 60, 30)));
  cl.push_back(fixed_scene("Meeting", at(13, 0), at(14, 0), flat(60, 165, 165)));
  cl.push_back(fixed_scene("Driving", at(18, 0), at(18, 30), flat(35, 35, 35, 15, 10)));
  cl.push_back(fixed_scene("Socializing", at(18, 30), at(19, 30), flat(185, 185, 235)));
  cl.push_back(fixed_scene("Hygiene", at(19, 30), at(20, 0), flat(240, 240, 240, 10, 8)));
  // Afternoon mix.
  cl.push_back(flexible_class("Reading", at(14, 0), at(18, 0), kEveryDay, 2.0,
                              quads({120, 40, 40}, {40, 40, 120})));
  cl.push_back(flexible_class("Chatting", at(14, 0), at(18, 0), kEveryDay, 2.0, flat(230, 140, 40)));
  cl.push_back(flexible_class("Family", at(14, 0), at(18, 0), kEveryDay, 3.0, flat(60, 110, 60)));

  std::vector<std::string> names = ActivityLabelSet::canonical().names();
  names.push_back("Walking");
  order_like(cfg, ActivityLabelSet(names));
  return cfg;
}

}  // namespace lifelog
