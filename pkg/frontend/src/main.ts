// Entry point: read settings from the URL, boot the viewer.
//
//   ?server=ws://host:port   socket address (default: ws:// + page host)
//   ?stereo=mono|sbs         one canvas or a side-by-side pair
//   ?ipd=0.064               interpupillary distance in meters
//   ?orientation=1           steer with device orientation where available

import { Viewer } from './viewer.js';

function defaultUrl(): string {
  const host = location.host || '127.0.0.1:9751';
  return `ws://${host}/`;
}

const params = new URLSearchParams(location.search);
const stereo = params.get('stereo') === 'sbs' ? 'sbs' : 'mono';
const viewer = new Viewer(document.getElementById('app')!, {
  url: params.get('server') ?? defaultUrl(),
  stereo,
  ipdM: Number(params.get('ipd') ?? '0.064'),
  clientId: 'browser-viewer',
});
if (params.get('orientation') === '1') {
  viewer.controls.enableDeviceOrientation(window);
}
viewer.start();
