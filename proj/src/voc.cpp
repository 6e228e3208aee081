#include "msenet/voc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace msenet {

// --- portable pixmaps -------------------------------------------------------

void write_pnm(const std::string& path, const std::vector<float>& data,
               int channels, int h, int w) {
  MSENET_REQUIRE(channels == 1 || channels == 3, "write_pnm: ", channels,
                 " channels unsupported");
  MSENET_REQUIRE((int64_t)data.size() == (int64_t)channels * h * w,
                 "write_pnm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open for writing: ", path);
  f << (channels == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row((size_t)w * channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        const float v = data[(size_t)(c * h + y) * w + x];
        row[(size_t)x * channels + c] =
            (unsigned char)std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()), (std::streamsize)row.size());
  }
  if (!f) fail_io("failed writing ", path);
}

PnmImage read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open: ", path);
  std::string magic;
  f >> magic;
  PnmImage img;
  if (magic == "P6") {
    img.channels = 3;
  } else if (magic == "P5") {
    img.channels = 1;
  } else {
    fail_io(path, ": not a binary pixmap (magic '", magic, "')");
  }
  int maxval = 0;
  f >> img.w >> img.h >> maxval;
  if (!f || img.w <= 0 || img.h <= 0) fail_io(path, ": bad pixmap header");
  if (maxval != 255) fail_io(path, ": unsupported maxval ", maxval);
  f.get();  // single whitespace after the header
  std::vector<unsigned char> raw((size_t)img.w * img.h * img.channels);
  f.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)raw.size());
  if (!f) fail_io(path, ": truncated pixel data");
  img.data.resize(raw.size());
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        img.data[(size_t)(c * img.h + y) * img.w + x] =
            (float)raw[(size_t)(y * img.w + x) * img.channels + c] / 255.0f;
      }
    }
  }
  return img;
}

// --- VOC-style annotations --------------------------------------------------

VocAnnotation to_voc(const FramePair& fp) {
  VocAnnotation ann;
  ann.folder = fp.sequence_id;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.ppm", fp.frame_index);
  ann.filename = buf;
  ann.width = fp.rgb_w;
  ann.height = fp.rgb_h;
  ann.depth = 3;
  for (const auto& gt : fp.gts) {
    MSENET_REQUIRE(gt.class_id >= 0 && gt.class_id < (int)class_names().size(),
                   "to_voc: class id ", gt.class_id, " has no name");
    VocObject o;
    o.name = class_names()[(size_t)gt.class_id];
    o.xmin = (int)std::lround(gt.box.x1());
    o.ymin = (int)std::lround(gt.box.y1());
    o.xmax = (int)std::lround(gt.box.x2());
    o.ymax = (int)std::lround(gt.box.y2());
    ann.objects.push_back(std::move(o));
  }
  return ann;
}

void write_voc_xml(const std::string& path, const VocAnnotation& ann) {
  std::ofstream f(path);
  if (!f) fail_io("cannot open for writing: ", path);
  f << "<annotation>\n";
  f << "  <folder>" << ann.folder << "</folder>\n";
  f << "  <filename>" << ann.filename << "</filename>\n";
  f << "  <size>\n";
  f << "    <width>" << ann.width << "</width>\n";
  f << "    <height>" << ann.height << "</height>\n";
  f << "    <depth>" << ann.depth << "</depth>\n";
  f << "  </size>\n";
  for (const auto& o : ann.objects) {
    f << "  <object>\n";
    f << "    <name>" << o.name << "</name>\n";
    f << "    <bndbox>\n";
    f << "      <xmin>" << o.xmin << "</xmin>\n";
    f << "      <ymin>" << o.ymin << "</ymin>\n";
    f << "      <xmax>" << o.xmax << "</xmax>\n";
    f << "      <ymax>" << o.ymax << "</ymax>\n";
    f << "    </bndbox>\n";
    f << "  </object>\n";
  }
  f << "</annotation>\n";
  if (!f) fail_io("failed writing ", path);
}

namespace {

// Minimal cursor over the classic VOC tag layout with line diagnostics.
struct XmlCursor {
  const std::string& text;
  const std::string& path;
  size_t pos = 0;

  int line() const {
    return 1 + (int)std::count(text.begin(), text.begin() + (long)pos, '\n');
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace((unsigned char)text[pos])) ++pos;
  }

  bool peek_open(const std::string& tag) {
    skip_ws();
    return text.compare(pos, tag.size() + 2, "<" + tag + ">") == 0;
  }

  void expect_open(const std::string& tag) {
    skip_ws();
    if (!peek_open(tag))
      fail_io(path, ":", line(), ": expected <", tag, ">");
    pos += tag.size() + 2;
  }

  void expect_close(const std::string& tag) {
    skip_ws();
    if (text.compare(pos, tag.size() + 3, "</" + tag + ">") != 0)
      fail_io(path, ":", line(), ": expected </", tag, ">");
    pos += tag.size() + 3;
  }

  std::string text_until_close(const std::string& tag) {
    const size_t end = text.find("</" + tag + ">", pos);
    if (end == std::string::npos)
      fail_io(path, ":", line(), ": unterminated <", tag, ">");
    std::string value = text.substr(pos, end - pos);
    pos = end + tag.size() + 3;
    // trim
    const auto a = value.find_first_not_of(" \t\r\n");
    const auto b = value.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? "" : value.substr(a, b - a + 1);
  }

  std::string string_field(const std::string& tag) {
    expect_open(tag);
    return text_until_close(tag);
  }

  int int_field(const std::string& tag) {
    skip_ws();
    const int at_line = line();
    const std::string v = string_field(tag);
    try {
      size_t used = 0;
      const int out = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      fail_io(path, ":", at_line, ": field <", tag, "> is not an integer: '", v,
              "'");
    }
  }
};

}  // namespace

VocAnnotation read_voc_xml(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail_io("cannot open: ", path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  XmlCursor cur{text, path};

  VocAnnotation ann;
  cur.expect_open("annotation");
  ann.folder = cur.string_field("folder");
  ann.filename = cur.string_field("filename");
  cur.expect_open("size");
  ann.width = cur.int_field("width");
  ann.height = cur.int_field("height");
  ann.depth = cur.int_field("depth");
  cur.expect_close("size");
  while (cur.peek_open("object")) {
    cur.expect_open("object");
    VocObject o;
    o.name = cur.string_field("name");
    cur.expect_open("bndbox");
    o.xmin = cur.int_field("xmin");
    o.ymin = cur.int_field("ymin");
    o.xmax = cur.int_field("xmax");
    o.ymax = cur.int_field("ymax");
    cur.expect_close("bndbox");
    cur.expect_close("object");
    if (o.xmax <= o.xmin || o.ymax <= o.ymin)
      fail_io(path, ": object '", o.name, "' has a degenerate bndbox");
    ann.objects.push_back(std::move(o));
  }
  cur.expect_close("annotation");
  return ann;
}

GtBox voc_object_to_gt(const VocObject& obj,
                       const std::vector<std::string>& names) {
  const auto it = std::find(names.begin(), names.end(), obj.name);
  MSENET_REQUIRE(it != names.end(), "unknown class name: ", obj.name);
  GtBox gt;
  gt.class_id = (int)(it - names.begin());
  gt.box = BBox{(obj.xmin + obj.xmax) / 2.0, (obj.ymin + obj.ymax) / 2.0,
                (double)(obj.xmax - obj.xmin), (double)(obj.ymax - obj.ymin),
                Frame::RgbPx};
  return gt;
}

// --- manifest and sequences -------------------------------------------------

void write_manifest(const std::string& root,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream f(fs::path(root) / "manifest");
  if (!f) fail_io("cannot write manifest under ", root);
  for (const auto& e : entries)
    f << e.sequence_id << " " << e.frame_count << " " << e.split << "\n";
}

std::vector<ManifestEntry> read_manifest(const std::string& root) {
  const auto path = fs::path(root) / "manifest";
  std::ifstream f(path);
  if (!f) fail_io("cannot open manifest: ", path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    ManifestEntry e;
    std::istringstream is(line);
    if (!(is >> e.sequence_id >> e.frame_count >> e.split) ||
        (e.split != "train" && e.split != "test")) {
      fail_io(path.string(), ":", line_no,
              ": expected '<sequence_id> <frame_count> <train|test>', got '",
              line, "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_sequence(const std::string& root, const std::vector<FramePair>& frames) {
  MSENET_REQUIRE(!frames.empty(), "write_sequence: empty sequence");
  const fs::path seq_dir = fs::path(root) / frames[0].sequence_id;
  std::error_code ec;
  fs::create_directories(seq_dir / "rgb", ec);
  fs::create_directories(seq_dir / "thermal", ec);
  fs::create_directories(seq_dir / "annotations", ec);
  if (ec) fail_io("cannot create ", seq_dir.string(), ": ", ec.message());

  char name[32];
  for (const auto& fp : frames) {
    std::snprintf(name, sizeof(name), "%06d", fp.frame_index);
    write_pnm((seq_dir / "rgb" / (std::string(name) + ".ppm")).string(), fp.rgb,
              3, fp.rgb_h, fp.rgb_w);
    write_pnm((seq_dir / "thermal" / (std::string(name) + ".pgm")).string(),
              fp.thermal, 1, fp.thermal_h, fp.thermal_w);
    write_voc_xml((seq_dir / "annotations" / (std::string(name) + ".xml")).string(),
                  to_voc(fp));
  }
}

std::vector<FramePair> load_sequence(const std::string& root,
                                     const std::string& sequence_id,
                                     int frame_count,
                                     const std::vector<std::string>& names) {
  const fs::path seq_dir = fs::path(root) / sequence_id;
  std::vector<FramePair> out;
  char name[32];
  for (int i = 0; i < frame_count; ++i) {
    std::snprintf(name, sizeof(name), "%06d", i);
    FramePair fp;
    fp.sequence_id = sequence_id;
    fp.frame_index = i;
    auto rgb = read_pnm((seq_dir / "rgb" / (std::string(name) + ".ppm")).string());
    auto th =
        read_pnm((seq_dir / "thermal" / (std::string(name) + ".pgm")).string());
    MSENET_REQUIRE(rgb.channels == 3, "sequence ", sequence_id,
                   ": rgb frame is not 3-channel");
    MSENET_REQUIRE(th.channels == 1, "sequence ", sequence_id,
                   ": thermal frame is not 1-channel");
    fp.rgb = std::move(rgb.data);
    fp.rgb_w = rgb.w;
    fp.rgb_h = rgb.h;
    fp.thermal = std::move(th.data);
    fp.thermal_w = th.w;
    fp.thermal_h = th.h;
    auto ann = read_voc_xml(
        (seq_dir / "annotations" / (std::string(name) + ".xml")).string());
    for (const auto& o : ann.objects) fp.gts.push_back(voc_object_to_gt(o, names));
    out.push_back(std::move(fp));
  }
  return out;
}

Dataset load_dataset(const std::string& root) {
  Dataset ds;
  const auto entries = read_manifest(root);

  // class names: sorted unique over every annotation in the dataset
  std::set<std::string> names;
  char buf[32];
  for (const auto& e : entries) {
    for (int i = 0; i < e.frame_count; ++i) {
      std::snprintf(buf, sizeof(buf), "%06d", i);
      const auto ann = read_voc_xml((fs::path(root) / e.sequence_id /
                                     "annotations" / (std::string(buf) + ".xml"))
                                        .string());
      for (const auto& o : ann.objects) names.insert(o.name);
    }
  }
  ds.class_names.assign(names.begin(), names.end());

  for (const auto& e : entries) {
    Dataset::Sequence seq;
    seq.id = e.sequence_id;
    seq.split = e.split;
    seq.frames = load_sequence(root, e.sequence_id, e.frame_count, ds.class_names);
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace msenet
